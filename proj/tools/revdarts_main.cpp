#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>

#include "CLI11.hpp"
#include "revdarts/arch.hpp"
#include "revdarts/config.hpp"
#include "revdarts/profiler.hpp"
#include "revdarts/train.hpp"

using namespace revdarts;

namespace {

void write_error(const std::string& out_dir, const std::string& mode,
                 const std::string& message) {
    std::error_code ec;
    std::filesystem::create_directories(out_dir, ec);
    std::ofstream out(out_dir + "/error.json");
    if (!out) return;
    nlohmann::json j;
    j["mode"] = mode;
    j["error"] = message;
    out << j.dump(2) << "\n";
}

void snapshot_config(const RunConfig& cfg) {
    std::filesystem::create_directories(cfg.out_dir);
    std::ofstream snap(cfg.out_dir + "/config.json");
    if (!snap) fail("cannot write " + cfg.out_dir + "/config.json");
    snap << config_to_json(cfg).dump(2) << "\n";
}

int run_gradcheck() {
    int failures = 0;
    auto report = [&](const char* name, bool ok, const std::string& detail) {
        std::cout << (ok ? "PASS" : "FAIL") << " " << name;
        if (!detail.empty()) std::cout << " (" << detail << ")";
        std::cout << "\n";
        if (!ok) ++failures;
    };

    // the shipped linear layer: G_1(x) = 2x, G_2(y) = -y
    ReversibleLayer layer;
    layer.splits = 2;
    layer.g = {[](const std::vector<Tensor>& later, const std::vector<Tensor>&,
                  RngStream&) { return scale(later[0], 2.0); },
               [](const std::vector<Tensor>&, const std::vector<Tensor>& earlier,
                  RngStream&) { return scale(earlier[0], -1.0); }};
    Tensor x = Tensor::leaf({1, 2}, Dtype::f64, {1, 3});
    RngStream master(1);
    LayerRngLog log;
    Tensor y = forward_layer(layer, x, master, log);
    bool fwd_ok = y.at(0) == 7.0 && y.at(1) == -4.0;
    report("linear-example forward (1,3) -> (7,-4)", fwd_ok,
           "got (" + std::to_string(y.at(0)) + "," + std::to_string(y.at(1)) +
               ")");
    Tensor back = inverse_layer(layer, y, log);
    report("linear-example inverse recovers (1,3)",
           back.at(0) == 1.0 && back.at(1) == 3.0, "");
    Tensor dy = Tensor::leaf({1, 2}, Dtype::f64, {1, 1});
    auto bundle = backward_with_reconstruction(layer, y, dy, log);
    report("linear-example dX == (0,1)",
           bundle.dx.at(0) == 0.0 && bundle.dx.at(1) == 1.0,
           "dX = (" + std::to_string(bundle.dx.at(0)) + "," +
               std::to_string(bundle.dx.at(1)) + ")");

    // finite-difference spot checks over a wrapped op and a softmax
    RngStream rng(3);
    auto fd_check = [&](const char* name,
                        const std::function<Tensor(const Tensor&)>& build,
                        const Tensor& point) {
        Tensor leaf = point.detach(true);
        Tape tape;
        {
            TapeScope scope(tape);
            Tensor out = sum_all(build(leaf));
            tape.backward_from(out, Tensor::full({1}, Dtype::f64, 1.0));
        }
        Tensor fd = finite_diff_gradient(
            [&](const Tensor& t) {
                double s = 0.0;
                Tensor out = build(t);
                for (std::size_t i = 0; i < out.size(); ++i) s += out.at(i);
                return s;
            },
            point, 1e-5);
        auto got = leaf.grad_or_zeros();
        double worst = 0.0;
        for (std::size_t i = 0; i < got.size(); ++i) {
            double denom = std::max(
                {1.0, std::fabs(got[i]), std::fabs(fd.at(i))});
            worst = std::max(worst, std::fabs(got[i] - fd.at(i)) / denom);
        }
        report(name, worst <= 1e-5,
               "max rel err " + std::to_string(worst));
    };

    std::vector<double> hv(4 * 8);
    RngStream hrng(9);
    for (double& v : hv) v = hrng.next_normal();
    Tensor h = Tensor::leaf({4, 8}, Dtype::f64, hv);
    OperationInstance ffn = make_op(OperationKind::FFN, 8, rng, Dtype::f64);
    fd_check("ffn-op gradient vs finite differences",
             [&](const Tensor& t) {
                 AttentionContext ctx;
                 RngStream r(1);
                 return apply_op(ffn, t, ctx, r);
             },
             h);
    fd_check("softmax gradient vs finite differences",
             [](const Tensor& t) { return softmax_rows(t); }, h);

    std::cout << (failures == 0 ? "gradcheck PASS" : "gradcheck FAIL") << "\n";
    return failures == 0 ? 0 : 1;
}

int dispatch(const RunConfig& cfg) {
    switch (cfg.mode) {
        case Mode::search: {
            SearchResult r = run_search(cfg);
            std::cout << "search finished: " << r.metrics.size() << " steps, "
                      << r.checkpoint_dirs.size() << " checkpoints, "
                      << r.rejected_steps << " rejected\n";
            std::cout << "search space size: "
                      << search_space_size(
                             static_cast<int>(legal_ops(Side::encoder).size()),
                             static_cast<int>(legal_ops(Side::decoder).size()),
                             cfg.dims.m, cfg.dims.n, cfg.dims.s)
                      << "\n";
            if (!r.metrics.empty())
                std::cout << "final train_loss " << r.metrics.back().train_loss
                          << " val_loss " << r.metrics.back().val_loss << "\n";
            return 0;
        }
        case Mode::derive: {
            RngStream rng(cfg.seed);
            SuperNetwork net = make_supernet(cfg.dims, cfg.pooling, cfg.dropout,
                                             cfg.dtype, rng);
            load_checkpoint(net, cfg.checkpoint);
            Architecture arch = discretize(net);
            arch.provenance["checkpoint"] = cfg.checkpoint;
            arch.provenance["seed"] = cfg.seed;
            std::filesystem::create_directories(cfg.out_dir);
            save_arch(arch, cfg.out_dir + "/arch.json");
            std::cout << "derived architecture written to " << cfg.out_dir
                      << "/arch.json\n";
            return 0;
        }
        case Mode::train: {
            Architecture arch = load_arch(cfg.train.arch_path);
            TrainResult r = train_derived(arch, cfg);
            if (r.aborted_non_finite) {
                write_error(cfg.out_dir, "train",
                            "non-finite loss; last good checkpoint retained");
                return 1;
            }
            EvalResult e = evaluate(r.net, cfg.data, Shard::retrain_val,
                                    cfg.eval.sequences,
                                    cfg.train.label_smoothing);
            nlohmann::json j;
            j["token_accuracy"] = e.token_accuracy;
            j["sequence_accuracy"] = e.sequence_accuracy;
            j["mean_loss"] = e.mean_loss;
            std::ofstream out(cfg.out_dir + "/eval.json");
            out << j.dump(2) << "\n";
            std::cout << "train finished: token_accuracy " << e.token_accuracy
                      << "\n";
            return 0;
        }
        case Mode::eval: {
            Architecture arch = load_arch(cfg.eval.arch_path);
            RngStream rng(cfg.seed + 1);
            SuperNetwork net = realize(arch, cfg.pooling, 0.0, cfg.dtype, rng);
            load_checkpoint(net, cfg.eval.checkpoint);
            EvalResult e = evaluate(net, cfg.data, Shard::test,
                                    cfg.eval.sequences, 0.1);
            nlohmann::json j;
            j["token_accuracy"] = e.token_accuracy;
            j["sequence_accuracy"] = e.sequence_accuracy;
            j["mean_loss"] = e.mean_loss;
            j["sequences"] = e.sequences;
            std::filesystem::create_directories(cfg.out_dir);
            std::ofstream out(cfg.out_dir + "/eval.json");
            out << j.dump(2) << "\n";
            std::cout << j.dump() << "\n";
            return 0;
        }
        case Mode::gradcheck:
            return run_gradcheck();
        case Mode::memprofile: {
            ProfileResult r = profile_memory(cfg.memprofile, cfg.pooling,
                                             cfg.dtype, cfg.seed);
            write_profile(r, cfg.out_dir);
            std::cout << "memprofile: " << r.rows.size() << " rows written to "
                      << cfg.out_dir << "/memprofile.csv\n";
            return 0;
        }
    }
    fail("unhandled mode");
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"reversible-backbone architecture search"};
    std::string mode_str, config_path, out_dir, dtype_str;
    std::uint64_t seed = 0;
    bool seed_set = false, out_set = false, dtype_set = false;
    std::vector<std::string> overrides;

    app.add_option("mode", mode_str,
                   "search|derive|train|eval|gradcheck|memprofile")
        ->required();
    app.add_option("--config", config_path, "JSON config file")->required();
    auto* seed_opt = app.add_option("--seed", seed, "override config seed");
    auto* out_opt = app.add_option("--out", out_dir, "override output dir");
    auto* dtype_opt =
        app.add_option("--dtype", dtype_str, "override dtype (f32|f64)");
    app.add_option("--set", overrides,
                   "dotted config overrides, e.g. search.steps=50");

    CLI11_PARSE(app, argc, argv);
    seed_set = seed_opt->count() > 0;
    out_set = out_opt->count() > 0;
    dtype_set = dtype_opt->count() > 0;

    RunConfig cfg;
    try {
        Mode mode = mode_from_name(mode_str);
        std::vector<std::string> all = overrides;
        if (seed_set) all.push_back("seed=" + std::to_string(seed));
        if (out_set) all.push_back("out=" + out_dir);
        if (dtype_set) all.push_back("dtype=" + dtype_str);
        cfg = load_config(config_path, mode, all);
    } catch (const std::exception& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    }

    try {
        if (cfg.mode != Mode::gradcheck) snapshot_config(cfg);
        return dispatch(cfg);
    } catch (const std::exception& e) {
        std::cerr << "run failed: " << e.what() << "\n";
        write_error(cfg.out_dir, mode_name(cfg.mode), e.what());
        return 1;
    }
}
