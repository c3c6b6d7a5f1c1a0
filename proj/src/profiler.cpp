#include "revdarts/profiler.hpp"

#include <filesystem>
#include <fstream>

#include "revdarts/ledger.hpp"
#include "revdarts/reversible.hpp"
#include "revdarts/search.hpp"

namespace revdarts {

namespace {

constexpr int kProfileSplits = 2;

struct SweepPoint {
    std::vector<SearchNode> nodes; // one per split, shared across depth
};

SweepPoint make_point(int d, Pooling pooling, Dtype dtype, std::uint64_t seed) {
    if (d % (8 * kProfileSplits) != 0)
        fail("memprofile width " + std::to_string(d) +
             " must be a multiple of " + std::to_string(8 * kProfileSplits));
    RngStream rng(seed);
    SweepPoint point;
    for (int k = 0; k < kProfileSplits; ++k)
        point.nodes.push_back(make_search_node(
            Side::encoder, d / kProfileSplits, pooling, rng, dtype));
    return point;
}

std::vector<ReversibleLayer> point_layers(const SweepPoint& point, int depth) {
    std::vector<ReversibleLayer> layers;
    for (int i = 0; i < depth; ++i) {
        ReversibleLayer layer;
        layer.splits = kProfileSplits;
        for (const SearchNode& node : point.nodes) {
            const SearchNode* np = &node;
            layer.g.push_back([np](const std::vector<Tensor>& later,
                                   const std::vector<Tensor>& earlier,
                                   RngStream& rng) {
                return g_k_forward(*np, later, earlier, AttentionContext{},
                                   rng);
            });
        }
        layers.push_back(std::move(layer));
    }
    return layers;
}

Tensor profile_input(int l, int d, Dtype dtype, std::uint64_t seed) {
    RngStream rng(seed);
    std::vector<double> v(static_cast<std::size_t>(l) * d);
    for (double& x : v) x = rng.next_normal();
    return Tensor::leaf({l, d}, dtype, std::move(v));
}

} // namespace

ProfileResult profile_memory(const MemprofileConfig& cfg, Pooling pooling,
                             Dtype dtype, std::uint64_t seed) {
    ProfileResult result;
    nlohmann::json points = nlohmann::json::array();
    for (int d : cfg.dims) {
        SweepPoint point = make_point(d, pooling, dtype, seed + d);
        for (int depth : cfg.depths) {
            ProfileRow rev;
            rev.d = d;
            rev.depth = depth;
            rev.backbone = "reversible";
            {
                MemoryLedger ledger;
                LedgerScope lscope(ledger);
                StackState stack;
                stack.layers = point_layers(point, depth);
                Tensor x = profile_input(cfg.seq_len, d, dtype, seed ^ 0xF00);
                RngStream master(seed + depth);
                Tensor out = forward_stack(stack, x, master);
                rev.retained_bytes = ledger.retained_bytes;
                rev.cap_exceeded = rev.retained_bytes > cfg.byte_cap;
                stack_backward(stack,
                               Tensor::full(out.shape(), dtype, 1.0));
                rev.peak_bytes = ledger.peak_bytes;
                rev.recompute_count = ledger.recompute_count;
                if (!ledger.balanced())
                    fail("memprofile: reversible ledger leaked bytes at d=" +
                         std::to_string(d) + " depth=" + std::to_string(depth));
            }
            result.rows.push_back(rev);

            ProfileRow std_row;
            std_row.d = d;
            std_row.depth = depth;
            std_row.backbone = "standard";
            {
                MemoryLedger ledger;
                LedgerScope lscope(ledger);
                Tensor x =
                    profile_input(cfg.seq_len, d, dtype, seed ^ 0xF00)
                        .detach(true);
                Tensor out;
                {
                    Tape tape;
                    TapeScope scope(tape);
                    Tensor h = x;
                    LayerRngLog log;
                    RngStream master(seed + depth);
                    for (const auto& layer : point_layers(point, depth))
                        h = forward_layer(layer, h, master, log);
                    out = h;
                    std_row.retained_bytes = ledger.retained_bytes;
                    std_row.cap_exceeded =
                        std_row.retained_bytes > cfg.byte_cap;
                    tape.backward_from(out,
                                       Tensor::full(out.shape(), dtype, 1.0));
                    std_row.peak_bytes = ledger.peak_bytes;
                    std_row.recompute_count = ledger.recompute_count;
                }
                if (!ledger.balanced())
                    fail("memprofile: standard ledger leaked bytes at d=" +
                         std::to_string(d) + " depth=" + std::to_string(depth));
            }
            result.rows.push_back(std_row);

            nlohmann::json pt;
            pt["d"] = d;
            pt["depth"] = depth;
            pt["reversible_retained_bytes"] = rev.retained_bytes;
            pt["standard_retained_bytes"] = std_row.retained_bytes;
            pt["ratio"] = static_cast<double>(rev.retained_bytes) /
                          static_cast<double>(std_row.retained_bytes);
            pt["cap_exceeded"] = rev.cap_exceeded || std_row.cap_exceeded;
            points.push_back(std::move(pt));
        }
    }
    result.summary["points"] = points;
    return result;
}

void write_profile(const ProfileResult& result, const std::string& out_dir) {
    std::filesystem::create_directories(out_dir);
    std::ofstream csv(out_dir + "/memprofile.csv");
    if (!csv) fail("cannot write " + out_dir + "/memprofile.csv");
    csv << "d,depth,backbone,retained_bytes,peak_bytes,recompute_count\n";
    for (const ProfileRow& r : result.rows)
        csv << r.d << "," << r.depth << "," << r.backbone << ","
            << r.retained_bytes << "," << r.peak_bytes << ","
            << r.recompute_count << "\n";
    std::ofstream js(out_dir + "/memprofile.json");
    if (!js) fail("cannot write " + out_dir + "/memprofile.json");
    js << result.summary.dump(2) << "\n";
}

} // namespace revdarts
