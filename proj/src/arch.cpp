#include "revdarts/arch.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

namespace revdarts {

namespace {

void check_grid(const std::vector<std::vector<OperationKind>>& grid, int rows,
                int cols, Side side, const char* label) {
    if (static_cast<int>(grid.size()) != rows)
        fail(std::string(label) + " grid has " + std::to_string(grid.size()) +
             " rows, expected s=" + std::to_string(rows));
    const auto& legal = legal_ops(side);
    for (const auto& row : grid) {
        if (static_cast<int>(row.size()) != cols)
            fail(std::string(label) + " row has " + std::to_string(row.size()) +
                 " entries, expected " + std::to_string(cols));
        for (OperationKind kind : row)
            if (std::find(legal.begin(), legal.end(), kind) == legal.end())
                fail(std::string(label) + " contains op '" + op_tag(kind) +
                     "' that is illegal for this side");
    }
}

} // namespace

void Architecture::validate() const {
    if (version != 1)
        fail("arch version " + std::to_string(version) +
             " is not supported (expected 1)");
    dims.validate();
    check_grid(encoder, dims.s, dims.m, Side::encoder, "encoder");
    check_grid(decoder, dims.s, dims.n, Side::decoder, "decoder");
}

bool Architecture::structurally_equal(const Architecture& other) const {
    return version == other.version && dims.d == other.dims.d &&
           dims.e == other.dims.e && dims.m == other.dims.m &&
           dims.n == other.dims.n && dims.s == other.dims.s &&
           encoder == other.encoder && decoder == other.decoder;
}

nlohmann::json arch_to_json(const Architecture& arch) {
    arch.validate();
    nlohmann::json j;
    j["version"] = arch.version;
    j["dims"] = {{"vocab", arch.dims.vocab},   {"e", arch.dims.e},
                 {"d", arch.dims.d},           {"m", arch.dims.m},
                 {"n", arch.dims.n},           {"s", arch.dims.s},
                 {"enc_layers", arch.dims.enc_layers},
                 {"dec_layers", arch.dims.dec_layers},
                 {"l_max", arch.dims.l_max}};
    auto grid_json = [](const std::vector<std::vector<OperationKind>>& grid) {
        nlohmann::json out = nlohmann::json::array();
        for (const auto& row : grid) {
            nlohmann::json r = nlohmann::json::array();
            for (OperationKind kind : row) r.push_back(op_tag(kind));
            out.push_back(r);
        }
        return out;
    };
    j["encoder"] = grid_json(arch.encoder);
    j["decoder"] = {{"searched", grid_json(arch.decoder)},
                    {"fixed_last_split", "cross_attn"}};
    j["provenance"] = arch.provenance;
    return j;
}

Architecture arch_from_json(const nlohmann::json& j) {
    Architecture arch;
    if (!j.contains("version")) fail("arch.json: missing field 'version'");
    arch.version = j.at("version").get<int>();
    if (arch.version != 1)
        fail("arch.json: version " + std::to_string(arch.version) +
             " is not supported (expected 1)");
    const auto& d = j.at("dims");
    arch.dims.vocab = d.at("vocab").get<int>();
    arch.dims.e = d.at("e").get<int>();
    arch.dims.d = d.at("d").get<int>();
    arch.dims.m = d.at("m").get<int>();
    arch.dims.n = d.at("n").get<int>();
    arch.dims.s = d.at("s").get<int>();
    arch.dims.enc_layers = d.value("enc_layers", arch.dims.s);
    arch.dims.dec_layers = d.value("dec_layers", arch.dims.s);
    arch.dims.l_max = d.value("l_max", 48);

    auto grid_from = [](const nlohmann::json& rows) {
        std::vector<std::vector<OperationKind>> grid;
        for (const auto& row : rows) {
            std::vector<OperationKind> r;
            for (const auto& tag : row)
                r.push_back(op_from_tag(tag.get<std::string>()));
            grid.push_back(std::move(r));
        }
        return grid;
    };
    arch.encoder = grid_from(j.at("encoder"));
    const auto& dec = j.at("decoder");
    arch.decoder = grid_from(dec.at("searched"));
    if (dec.at("fixed_last_split").get<std::string>() != "cross_attn")
        fail("arch.json: decoder.fixed_last_split must be 'cross_attn'");
    arch.provenance = j.value("provenance", nlohmann::json::object());
    arch.validate();
    return arch;
}

void save_arch(const Architecture& arch, const std::string& path) {
    std::ofstream out(path);
    if (!out) fail("cannot write " + path);
    out << arch_to_json(arch).dump(2) << "\n";
    if (!out) fail("write failed for " + path);
}

Architecture load_arch(const std::string& path) {
    std::ifstream in(path);
    if (!in) fail("cannot read " + path);
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        fail(path + ": " + e.what());
    }
    return arch_from_json(j);
}

Architecture discretize(const SuperNetwork& net) {
    Architecture arch;
    arch.dims = net.dims;
    for (const auto& row : net.enc_nodes) {
        std::vector<OperationKind> r;
        for (const auto& node : row) r.push_back(discretize_node(node));
        arch.encoder.push_back(std::move(r));
    }
    for (const auto& row : net.dec_nodes) {
        std::vector<OperationKind> r;
        for (const auto& node : row) r.push_back(discretize_node(node));
        arch.decoder.push_back(std::move(r));
    }
    arch.provenance["pooling"] = pooling_name(net.pooling);
    return arch;
}

SuperNetwork realize(const Architecture& arch, Pooling pooling,
                     double dropout_p, Dtype dtype, RngStream& rng) {
    arch.validate();
    SuperNetwork net;
    net.dims = arch.dims;
    net.dtype = dtype;
    net.pooling = pooling;
    net.dropout_p = dropout_p;
    net.embed = make_embedding(arch.dims, rng, dtype);
    {
        std::vector<double> v(static_cast<std::size_t>(arch.dims.d) *
                              arch.dims.dec_split_width());
        double sd = 1.0 / std::sqrt(static_cast<double>(arch.dims.d));
        for (double& x : v) x = sd * rng.next_normal();
        net.mem_proj = Tensor::leaf({arch.dims.d, arch.dims.dec_split_width()},
                                    dtype, std::move(v), true);
    }
    auto single_node = [&](OperationKind kind, Side side, int width) {
        SearchNode node;
        node.pooling = pooling;
        node.side = side;
        node.ops.push_back(make_op(kind, width, rng, dtype));
        node.alpha = Tensor::leaf({1, 1}, dtype, {0.0}, false);
        return node;
    };
    for (int b = 0; b < arch.dims.s; ++b) {
        std::vector<SearchNode> enc_row, dec_row;
        for (int k = 0; k < arch.dims.m; ++k)
            enc_row.push_back(single_node(
                arch.encoder[static_cast<std::size_t>(b)]
                            [static_cast<std::size_t>(k)],
                Side::encoder, arch.dims.enc_split_width()));
        for (int k = 0; k < arch.dims.n; ++k)
            dec_row.push_back(single_node(
                arch.decoder[static_cast<std::size_t>(b)]
                            [static_cast<std::size_t>(k)],
                Side::decoder, arch.dims.dec_split_width()));
        net.enc_nodes.push_back(std::move(enc_row));
        net.dec_nodes.push_back(std::move(dec_row));
        net.dec_cross.push_back(make_op(OperationKind::CrossAttention,
                                        arch.dims.dec_split_width(), rng,
                                        dtype));
    }
    return net;
}

std::vector<std::pair<std::string, Tensor>> named_tensors(
    const SuperNetwork& net) {
    std::vector<std::pair<std::string, Tensor>> out;
    out.emplace_back("embed.vocab_to_e", net.embed.vocab_to_e);
    out.emplace_back("embed.e_to_d", net.embed.e_to_d);
    out.emplace_back("embed.pos", net.embed.pos);
    out.emplace_back("mem_proj", net.mem_proj);
    auto add_nodes = [&](const char* prefix,
                         const std::vector<std::vector<SearchNode>>& grid) {
        for (std::size_t b = 0; b < grid.size(); ++b)
            for (std::size_t k = 0; k < grid[b].size(); ++k) {
                std::string base = std::string(prefix) + "." +
                                   std::to_string(b) + "." + std::to_string(k);
                out.emplace_back(base + ".alpha", grid[b][k].alpha);
                for (const auto& op : grid[b][k].ops)
                    for (const auto& [pname, t] : op.params)
                        out.emplace_back(
                            base + "." + op_tag(op.kind) + "." + pname, t);
            }
    };
    add_nodes("enc", net.enc_nodes);
    add_nodes("dec", net.dec_nodes);
    for (std::size_t b = 0; b < net.dec_cross.size(); ++b)
        for (const auto& [pname, t] : net.dec_cross[b].params)
            out.emplace_back("dec_cross." + std::to_string(b) + "." + pname, t);
    return out;
}

nlohmann::json alpha_to_json(const SuperNetwork& net) {
    nlohmann::json j;
    j["pooling"] = pooling_name(net.pooling);
    nlohmann::json nodes = nlohmann::json::array();
    auto add = [&](const char* side,
                   const std::vector<std::vector<SearchNode>>& grid) {
        for (std::size_t b = 0; b < grid.size(); ++b)
            for (std::size_t k = 0; k < grid[b].size(); ++k) {
                nlohmann::json node;
                node["side"] = side;
                node["block"] = b;
                node["split"] = k;
                node["alpha"] = grid[b][k].alpha.values();
                nlohmann::json tags = nlohmann::json::array();
                for (const auto& op : grid[b][k].ops)
                    tags.push_back(op_tag(op.kind));
                node["ops"] = tags;
                nodes.push_back(std::move(node));
            }
    };
    add("encoder", net.enc_nodes);
    add("decoder", net.dec_nodes);
    j["nodes"] = nodes;
    return j;
}

void save_checkpoint(const SuperNetwork& net, const std::string& dir) {
    auto tensors = named_tensors(net);
    std::string bin_path = dir + "/theta.bin";
    std::ofstream bin(bin_path, std::ios::binary);
    if (!bin) fail("cannot write " + bin_path);
    nlohmann::json sidecar;
    sidecar["dtype"] = dtype_name(net.dtype);
    nlohmann::json list = nlohmann::json::array();
    std::uint64_t offset = 0;
    for (const auto& [name, t] : tensors) {
        // values are always serialized as f64; dtype records the run mode
        bin.write(reinterpret_cast<const char*>(t.values().data()),
                  static_cast<std::streamsize>(t.size() * sizeof(double)));
        list.push_back({{"name", name},
                        {"shape", t.shape()},
                        {"offset", offset},
                        {"count", t.size()}});
        offset += t.size() * sizeof(double);
    }
    if (!bin) fail("write failed for " + bin_path);
    sidecar["tensors"] = list;
    std::ofstream side(dir + "/theta.json");
    if (!side) fail("cannot write " + dir + "/theta.json");
    side << sidecar.dump(2) << "\n";

    std::ofstream alpha(dir + "/alpha.json");
    if (!alpha) fail("cannot write " + dir + "/alpha.json");
    alpha << alpha_to_json(net).dump(2) << "\n";
}

void load_checkpoint(SuperNetwork& net, const std::string& dir) {
    std::ifstream side(dir + "/theta.json");
    if (!side) fail("cannot read " + dir + "/theta.json");
    nlohmann::json sidecar;
    side >> sidecar;
    std::ifstream bin(dir + "/theta.bin", std::ios::binary);
    if (!bin) fail("cannot read " + dir + "/theta.bin");

    auto tensors = named_tensors(net);
    const auto& list = sidecar.at("tensors");
    if (list.size() != tensors.size())
        fail(dir + ": checkpoint has " + std::to_string(list.size()) +
             " tensors, model expects " + std::to_string(tensors.size()));
    for (std::size_t i = 0; i < tensors.size(); ++i) {
        const auto& entry = list[i];
        auto& [name, t] = tensors[i];
        if (entry.at("name").get<std::string>() != name)
            fail(dir + ": tensor " + std::to_string(i) + " is '" +
                 entry.at("name").get<std::string>() + "', model expects '" +
                 name + "'");
        if (entry.at("shape").get<std::vector<int>>() != t.shape())
            fail(dir + ": shape mismatch for tensor '" + name + "'");
        bin.seekg(static_cast<std::streamoff>(entry.at("offset").get<std::uint64_t>()));
        bin.read(reinterpret_cast<char*>(t.mutable_values().data()),
                 static_cast<std::streamsize>(t.size() * sizeof(double)));
        if (!bin) fail(dir + ": truncated theta.bin reading '" + name + "'");
    }

    std::ifstream alpha_in(dir + "/alpha.json");
    if (!alpha_in) fail("cannot read " + dir + "/alpha.json");
    nlohmann::json aj;
    alpha_in >> aj;
    net.pooling = pooling_from_name(aj.at("pooling").get<std::string>());
}

} // namespace revdarts
