#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "revdarts/arch.hpp"
#include "revdarts/config.hpp"
#include "revdarts/profiler.hpp"

using namespace revdarts;
namespace fs = std::filesystem;

namespace {

const nlohmann::json kTinyConfig = {
    {"dims",
     {{"vocab", 10}, {"e", 8}, {"d", 32}, {"m", 2}, {"n", 1}, {"s", 1},
      {"enc_layers", 1}, {"dec_layers", 1}, {"l_max", 16}}},
    {"data",
     {{"task", "copy"}, {"vocab", 10}, {"l_min", 3}, {"l_max", 5},
      {"seed", 5}}},
    {"pooling", "avg"},
    {"dtype", "f64"},
    {"seed", 3},
    {"search", {{"steps", 2}, {"batch_size", 2}, {"checkpoint_interval", 2}}},
    {"train", {{"steps", 2}, {"batch_size", 2}, {"log_interval", 2}}},
    {"eval", {{"sequences", 2}}},
    {"memprofile", {{"dims", {32}}, {"depths", {1, 2, 4}}, {"seq_len", 6}}}};

fs::path fresh_dir(const char* tag) {
    auto dir = fs::temp_directory_path() / (std::string("revdarts_cli_") + tag);
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

fs::path write_config(const fs::path& dir,
                      const nlohmann::json& j = kTinyConfig) {
    fs::path p = dir / "config.json";
    std::ofstream out(p);
    out << j.dump(2) << "\n";
    return p;
}

struct CliResult {
    int exit_code = -1;
    std::string output;
};

CliResult run_cli(const std::string& args, const fs::path& dir) {
    fs::path log = dir / "cli_output.txt";
    std::string cmd = std::string(REVDARTS_BIN) + " " + args + " > " +
                      log.string() + " 2>&1";
    int rc = std::system(cmd.c_str());
    CliResult r;
    r.exit_code = WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
    std::ifstream in(log);
    std::stringstream ss;
    ss << in.rdbuf();
    r.output = ss.str();
    return r;
}

ModelDims tiny_dims() {
    ModelDims d;
    d.vocab = 10;
    d.e = 8;
    d.d = 32;
    d.m = 2;
    d.n = 1;
    d.s = 1;
    d.enc_layers = 1;
    d.dec_layers = 1;
    d.l_max = 16;
    return d;
}

} // namespace

TEST_CASE("override parsing") {
    nlohmann::json j = {{"a", 1}, {"nested", {{"x", 2}}}};
    apply_override(j, "a=5");
    CHECK(j["a"] == 5);
    apply_override(j, "nested.x=7");
    CHECK(j["nested"]["x"] == 7);
    apply_override(j, "nested.deep.str=hello");
    CHECK(j["nested"]["deep"]["str"] == "hello");
    apply_override(j, "flag=true");
    CHECK(j["flag"] == true);
    apply_override(j, "rate=2.5e-4");
    CHECK(j["rate"] == 2.5e-4);
    CHECK_THROWS_AS(apply_override(j, "novalue"), std::runtime_error);
    CHECK_THROWS_AS(apply_override(j, "=5"), std::runtime_error);
    CHECK_THROWS_AS(apply_override(j, "a..b=5"), std::runtime_error);
}

TEST_CASE("config validation names the offending field") {
    nlohmann::json j = kTinyConfig;
    CHECK_NOTHROW(config_from_json(j, Mode::search));

    j["dims"]["d"] = 33;
    CHECK_THROWS_WITH_AS(config_from_json(j, Mode::search),
                         doctest::Contains("dims.d"), std::runtime_error);

    j = kTinyConfig;
    j["mystery"] = 1;
    CHECK_THROWS_WITH_AS(config_from_json(j, Mode::search),
                         doctest::Contains("mystery"), std::runtime_error);

    j = kTinyConfig;
    j["data"]["vocab"] = 12;
    CHECK_THROWS_WITH_AS(config_from_json(j, Mode::search),
                         doctest::Contains("vocab"), std::runtime_error);

    j = kTinyConfig;
    j["train"]["arch"] = "/nonexistent/arch.json";
    CHECK_THROWS_WITH_AS(config_from_json(j, Mode::train),
                         doctest::Contains("/nonexistent/arch.json"),
                         std::runtime_error);

    CHECK_THROWS_WITH_AS(mode_from_name("bogus"), doctest::Contains("bogus"),
                         std::runtime_error);
}

TEST_CASE("cli: unknown mode and invalid config exit 2") {
    auto dir = fresh_dir("exit2");
    auto cfg = write_config(dir);
    CliResult r = run_cli("bogus --config " + cfg.string(), dir);
    CHECK(r.exit_code == 2);
    CHECK(r.output.find("bogus") != std::string::npos);

    r = run_cli("search --config " + cfg.string() + " --set dims.d=33", dir);
    CHECK(r.exit_code == 2);
    CHECK(r.output.find("dims.d") != std::string::npos);

    r = run_cli("search --config /nonexistent.json", dir);
    CHECK(r.exit_code == 2);
}

TEST_CASE("cli: gradcheck reports the linear example and passes") {
    auto dir = fresh_dir("gradcheck");
    auto cfg = write_config(dir);
    CliResult r = run_cli("gradcheck --config " + cfg.string(), dir);
    CHECK(r.exit_code == 0);
    CHECK(r.output.find("gradcheck PASS") != std::string::npos);
    CHECK(r.output.find("dX == (0,1)") != std::string::npos);
    CHECK(r.output.find("FAIL") == std::string::npos);
}

TEST_CASE("cli: memprofile emits the documented schema") {
    auto dir = fresh_dir("memprofile");
    auto cfg = write_config(dir);
    auto out = dir / "prof";
    CliResult r = run_cli(
        "memprofile --config " + cfg.string() + " --out " + out.string(), dir);
    REQUIRE(r.exit_code == 0);

    std::ifstream csv(out / "memprofile.csv");
    REQUIRE(csv.good());
    std::string header;
    std::getline(csv, header);
    CHECK(header == "d,depth,backbone,retained_bytes,peak_bytes,recompute_count");

    long long rev_retained = -1;
    std::vector<long long> std_retained;
    std::string line;
    while (std::getline(csv, line)) {
        std::stringstream ss(line);
        std::string d, depth, backbone, retained, peak, recompute;
        std::getline(ss, d, ',');
        std::getline(ss, depth, ',');
        std::getline(ss, backbone, ',');
        std::getline(ss, retained, ',');
        std::getline(ss, peak, ',');
        std::getline(ss, recompute, ',');
        long long ret = std::stoll(retained);
        if (backbone == "reversible") {
            if (rev_retained < 0) rev_retained = ret;
            CHECK(ret == rev_retained); // depth-independent
            CHECK(std::stoll(recompute) > 0);
        } else {
            CHECK(backbone == "standard");
            std_retained.push_back(ret);
            CHECK(std::stoll(recompute) == 0);
        }
        CHECK(std::stoll(peak) >= ret);
    }
    REQUIRE(std_retained.size() == 3);
    CHECK(std_retained[0] < std_retained[1]);
    CHECK(std_retained[1] < std_retained[2]);

    std::ifstream js(out / "memprofile.json");
    REQUIRE(js.good());
    nlohmann::json summary;
    js >> summary;
    for (const auto& pt : summary.at("points")) {
        CHECK(pt.contains("ratio"));
        if (pt.at("depth").get<int>() >= 2)
            CHECK(pt.at("ratio").get<double>() < 1.0);
    }
}

TEST_CASE("cli: derive on one-hot alphas lists exactly those kinds") {
    auto dir = fresh_dir("derive");
    auto cfg = write_config(dir);

    RngStream rng(3); // matches the config seed used by the cli
    SuperNetwork net =
        make_supernet(tiny_dims(), Pooling::avg, 0.0, Dtype::f64, rng);
    auto one_hot = [](SearchNode& node, OperationKind kind) {
        std::vector<double> a(node.ops.size(), 0.0);
        for (std::size_t i = 0; i < node.ops.size(); ++i)
            if (node.ops[i].kind == kind) a[i] = 10.0;
        node.alpha.mutable_values() = a;
    };
    one_hot(net.enc_nodes[0][0], OperationKind::FFN);
    one_hot(net.enc_nodes[0][1], OperationKind::SelfAttention);
    one_hot(net.dec_nodes[0][0], OperationKind::DynConv3);
    auto ckpt = dir / "ckpt";
    fs::create_directories(ckpt);
    save_checkpoint(net, ckpt.string());

    auto out = dir / "derived";
    CliResult r = run_cli("derive --config " + cfg.string() + " --out " +
                              out.string() + " --set checkpoint=" +
                              ckpt.string(),
                          dir);
    REQUIRE(r.exit_code == 0);
    Architecture arch = load_arch((out / "arch.json").string());
    CHECK(arch.encoder[0][0] == OperationKind::FFN);
    CHECK(arch.encoder[0][1] == OperationKind::SelfAttention);
    CHECK(arch.decoder[0][0] == OperationKind::DynConv3);

    // export -> import -> export is byte-stable
    Architecture again = load_arch((out / "arch.json").string());
    save_arch(again, (dir / "arch2.json").string());
    std::ifstream f1(out / "arch.json"), f2(dir / "arch2.json");
    std::stringstream s1, s2;
    s1 << f1.rdbuf();
    s2 << f2.rdbuf();
    CHECK(s1.str() == s2.str());
}

TEST_CASE("cli: mid-run failure writes error.json and exits 1") {
    auto dir = fresh_dir("error");
    auto cfg = write_config(dir);

    RngStream rng(3);
    SuperNetwork net =
        make_supernet(tiny_dims(), Pooling::avg, 0.0, Dtype::f64, rng);
    auto ckpt = dir / "ckpt";
    fs::create_directories(ckpt);
    save_checkpoint(net, ckpt.string());
    // truncate the weight dump so loading fails mid-run
    fs::resize_file(ckpt / "theta.bin", 64);

    auto out = dir / "derived";
    CliResult r = run_cli("derive --config " + cfg.string() + " --out " +
                              out.string() + " --set checkpoint=" +
                              ckpt.string(),
                          dir);
    CHECK(r.exit_code == 1);
    std::ifstream err(out / "error.json");
    REQUIRE(err.good());
    nlohmann::json ej;
    err >> ej;
    CHECK(ej.at("mode") == "derive");
    CHECK(!ej.at("error").get<std::string>().empty());
}

TEST_CASE("a hand-written architecture file validates against the schema") {
    auto dir = fresh_dir("handarch");
    nlohmann::json j = {
        {"version", 1},
        {"dims",
         {{"vocab", 64}, {"e", 32}, {"d", 96}, {"m", 2}, {"n", 3}, {"s", 2},
          {"enc_layers", 2}, {"dec_layers", 2}, {"l_max", 48}}},
        {"encoder",
         nlohmann::json::array({nlohmann::json::array({"self_attn", "dyn_conv_7"}),
                                nlohmann::json::array({"ffn", "std_conv_3"})})},
        {"decoder",
         {{"searched",
           nlohmann::json::array(
               {nlohmann::json::array({"dyn_conv_3", "self_attn", "glu"}),
                nlohmann::json::array({"std_conv_5", "ffn", "identity"})})},
          {"fixed_last_split", "cross_attn"}}},
        {"provenance", {{"note", "hand-encoded"}}}};
    fs::path p = dir / "arch.json";
    {
        std::ofstream out(p);
        out << j.dump(2) << "\n";
    }
    Architecture arch = load_arch(p.string());
    CHECK(arch.dims.s == 2);
    CHECK(arch.encoder[0][0] == OperationKind::SelfAttention);
    CHECK(arch.decoder[1][2] == OperationKind::Identity);
}
