#include "revdarts/train.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>

#include "revdarts/ledger.hpp"

namespace revdarts {

BilevelOptimizer make_bilevel(const SuperNetwork& net, const SearchConfig& cfg,
                              int total_steps) {
    AdamConfig theta_cfg;
    theta_cfg.schedule.kind = LrSchedule::Kind::warmup_inv_sqrt;
    theta_cfg.schedule.peak = cfg.theta_peak_lr;
    theta_cfg.schedule.warmup_steps =
        std::max(1, static_cast<int>(cfg.warmup_frac * total_steps));
    AdamConfig alpha_cfg;
    alpha_cfg.schedule.kind = LrSchedule::Kind::fixed;
    alpha_cfg.schedule.peak = cfg.alpha_lr;
    alpha_cfg.weight_decay = cfg.alpha_weight_decay;

    BilevelOptimizer opt{Adam(theta_cfg), Adam(alpha_cfg)};
    opt.theta.add_params(net.theta_params());
    opt.alpha.add_params(net.alpha_params());
    return opt;
}

namespace {

double batch_loss_with_grad(const SuperNetwork& net, const Batch& batch,
                            RngStream& master, double smoothing,
                            const PathAssignment* path, bool reversible) {
    int b = static_cast<int>(batch.src.size());
    double scale = 1.0 / b;
    double total = 0.0;
    for (int i = 0; i < b; ++i) {
        SequenceExample ex = example_from_batch(batch, i);
        total += reversible
                     ? reversible_loss_and_grad(net, ex, master, scale,
                                                smoothing, path)
                     : stored_loss_and_grad(net, ex, master, scale, smoothing,
                                            path);
    }
    return total * scale;
}

double batch_loss_no_grad(const SuperNetwork& net, const Batch& batch,
                          RngStream& master, double smoothing,
                          const PathAssignment* path) {
    double total = 0.0;
    for (std::size_t i = 0; i < batch.src.size(); ++i)
        total += sequence_loss(net,
                               example_from_batch(batch, static_cast<int>(i)),
                               master, smoothing, path);
    return total / static_cast<double>(batch.src.size());
}

} // namespace

StepMetrics bilevel_step(const SuperNetwork& net, const Batch& train_batch,
                         const Batch& val_batch, BilevelOptimizer& opt,
                         RngStream& master, double label_smoothing) {
    MemoryLedger ledger;
    LedgerScope lscope(ledger);
    StepMetrics m;

    opt.theta.zero_grads();
    opt.alpha.zero_grads();
    m.train_loss = batch_loss_with_grad(net, train_batch, master,
                                        label_smoothing, nullptr, true);
    if (std::isfinite(m.train_loss)) {
        opt.theta.step();
    } else {
        opt.theta.zero_grads();
        ++opt.rejected_steps;
    }
    // the train backward also deposited alpha gradients; discard them
    opt.alpha.zero_grads();

    m.val_loss = batch_loss_with_grad(net, val_batch, master, label_smoothing,
                                      nullptr, true);
    if (std::isfinite(m.val_loss)) {
        opt.alpha.step();
    } else {
        opt.alpha.zero_grads();
        ++opt.rejected_steps;
    }
    opt.theta.zero_grads();

    m.retained_bytes = ledger.peak_bytes;
    m.recompute_count = ledger.recompute_count;
    return m;
}

StepMetrics sampled_step(const SuperNetwork& net, const Batch& train_batch,
                         const Batch& val_batch, BilevelOptimizer& opt,
                         RngStream& master, RngStream& path_rng,
                         double label_smoothing) {
    MemoryLedger ledger;
    LedgerScope lscope(ledger);
    StepMetrics m;
    PathAssignment path = sample_uniform_path(net, path_rng);

    opt.theta.zero_grads();
    m.train_loss = batch_loss_with_grad(net, train_batch, master,
                                        label_smoothing, &path, true);
    if (std::isfinite(m.train_loss)) {
        opt.theta.step();
    } else {
        opt.theta.zero_grads();
        ++opt.rejected_steps;
    }
    opt.alpha.zero_grads();

    m.val_loss = batch_loss_no_grad(net, val_batch, master, label_smoothing,
                                    &path);
    m.retained_bytes = ledger.peak_bytes;
    m.recompute_count = ledger.recompute_count;
    return m;
}

namespace {

std::string metrics_line(const StepMetrics& m) {
    nlohmann::json j;
    j["step"] = m.step;
    j["train_loss"] = m.train_loss;
    j["val_loss"] = m.val_loss;
    j["retained_bytes"] = m.retained_bytes;
    j["recompute_count"] = m.recompute_count;
    return j.dump();
}

std::string write_checkpoint_dir(const SuperNetwork& net,
                                 const std::string& out_dir, int step) {
    std::string dir = out_dir + "/ckpt_" + std::to_string(step);
    std::filesystem::create_directories(dir);
    save_checkpoint(net, dir);
    return dir;
}

} // namespace

SearchResult run_search(const RunConfig& cfg) {
    std::filesystem::create_directories(cfg.out_dir);
    {
        std::ofstream snap(cfg.out_dir + "/config.json");
        if (!snap) fail("cannot write " + cfg.out_dir + "/config.json");
        snap << config_to_json(cfg).dump(2) << "\n";
    }

    RngStream init_rng(cfg.seed);
    SearchResult result{make_supernet(cfg.dims, cfg.pooling, cfg.dropout,
                                      cfg.dtype, init_rng)};
    BilevelOptimizer opt =
        make_bilevel(result.net, cfg.search, cfg.search.steps);
    RngStream master(cfg.seed ^ 0x5EEDF00DULL);
    RngStream path_rng(cfg.seed + 7);

    std::ofstream metrics(cfg.out_dir + "/metrics.jsonl");
    if (!metrics) fail("cannot write " + cfg.out_dir + "/metrics.jsonl");

    result.checkpoint_dirs.push_back(
        write_checkpoint_dir(result.net, cfg.out_dir, 0));
    for (int step = 1; step <= cfg.search.steps; ++step) {
        Batch train_batch =
            make_batch(cfg.data, Shard::theta_train,
                       static_cast<std::uint64_t>(step - 1),
                       cfg.search.batch_size);
        Batch val_batch = make_batch(cfg.data, Shard::alpha_val,
                                     static_cast<std::uint64_t>(step - 1),
                                     cfg.search.batch_size);
        StepMetrics m =
            cfg.search.strategy == SearchStrategy::darts
                ? bilevel_step(result.net, train_batch, val_batch, opt, master,
                               cfg.search.label_smoothing)
                : sampled_step(result.net, train_batch, val_batch, opt, master,
                               path_rng, cfg.search.label_smoothing);
        m.step = step;
        metrics << metrics_line(m) << "\n";
        result.metrics.push_back(m);
        if (step % cfg.search.checkpoint_interval == 0)
            result.checkpoint_dirs.push_back(
                write_checkpoint_dir(result.net, cfg.out_dir, step));
    }
    result.rejected_steps = opt.rejected_steps;

    Architecture arch = discretize(result.net);
    arch.provenance["seed"] = cfg.seed;
    arch.provenance["steps"] = cfg.search.steps;
    arch.provenance["strategy"] =
        cfg.search.strategy == SearchStrategy::darts ? "darts"
                                                     : "uniform_sampling";
    save_arch(arch, cfg.out_dir + "/arch.json");
    return result;
}

TrainResult train_derived(const Architecture& arch, const RunConfig& cfg) {
    std::filesystem::create_directories(cfg.out_dir);
    RngStream init_rng(cfg.seed + 1);
    TrainResult result{realize(arch, cfg.pooling, cfg.dropout, cfg.dtype,
                               init_rng)};

    AdamConfig adam_cfg;
    adam_cfg.schedule.kind = LrSchedule::Kind::warmup_inv_sqrt;
    adam_cfg.schedule.peak = cfg.train.peak_lr;
    adam_cfg.schedule.warmup_steps =
        std::max(1, static_cast<int>(cfg.train.warmup_frac * cfg.train.steps));
    Adam adam(adam_cfg);
    adam.add_params(result.net.theta_params());

    RngStream master(cfg.seed ^ 0x7EA1ULL);
    std::ofstream metrics(cfg.out_dir + "/metrics.jsonl");
    if (!metrics) fail("cannot write " + cfg.out_dir + "/metrics.jsonl");

    for (int step = 1; step <= cfg.train.steps; ++step) {
        MemoryLedger ledger;
        LedgerScope lscope(ledger);
        Batch batch = make_batch(cfg.data, Shard::retrain_train,
                                 static_cast<std::uint64_t>(step - 1),
                                 cfg.train.batch_size);
        adam.zero_grads();
        double loss = batch_loss_with_grad(result.net, batch, master,
                                           cfg.train.label_smoothing, nullptr,
                                           false);
        if (!std::isfinite(loss)) {
            result.aborted_non_finite = true;
            break;
        }
        adam.step();
        if (step % cfg.train.log_interval == 0 || step == cfg.train.steps) {
            Batch val = make_batch(cfg.data, Shard::retrain_val,
                                   static_cast<std::uint64_t>(step),
                                   cfg.train.batch_size);
            StepMetrics m;
            m.step = step;
            m.train_loss = loss;
            m.val_loss = batch_loss_no_grad(result.net, val, master,
                                            cfg.train.label_smoothing, nullptr);
            m.retained_bytes = ledger.peak_bytes;
            m.recompute_count = ledger.recompute_count;
            metrics << metrics_line(m) << "\n";
            result.metrics.push_back(m);
            save_checkpoint(result.net, cfg.out_dir);
        }
    }
    return result;
}

std::vector<int> greedy_decode(const SuperNetwork& net,
                               const std::vector<int>& src) {
    int max_len = static_cast<int>(1.2 * static_cast<double>(src.size())) + 10;
    max_len = std::min(max_len, net.dims.l_max - 1);
    std::vector<int> prefix{kBosId}, out;
    RngStream rng(0);
    for (int t = 0; t < max_len; ++t) {
        Tensor logits = decode_logits(net, src, prefix, rng);
        int last = logits.dim(0) - 1;
        int best = 0;
        for (int v = 1; v < logits.dim(1); ++v)
            if (logits.at(last, v) > logits.at(last, best)) best = v;
        out.push_back(best);
        prefix.push_back(best);
        if (best == kEosId) break;
    }
    return out;
}

EvalResult evaluate(const SuperNetwork& net, const DataSpec& data, Shard shard,
                    int sequences, double label_smoothing) {
    EvalResult r;
    long long matched = 0, ref_total = 0;
    const int batch_size = 8;
    std::uint64_t batch_index = 0;
    while (r.sequences < sequences) {
        Batch batch = make_batch(data, shard, batch_index++, batch_size);
        for (int row = 0;
             row < batch_size && r.sequences < sequences; ++row) {
            std::vector<int> src = batch_source_tokens(batch, row);
            std::vector<int> ref = batch_reference_tokens(batch, row);
            std::vector<int> hyp = greedy_decode(net, src);
            for (std::size_t i = 0; i < ref.size(); ++i)
                if (i < hyp.size() && hyp[i] == ref[i]) ++matched;
            ref_total += static_cast<long long>(ref.size());
            if (hyp == ref) r.sequence_accuracy += 1.0;
            RngStream rng(0);
            r.mean_loss += sequence_loss(net, example_from_batch(batch, row),
                                         rng, label_smoothing);
            ++r.sequences;
        }
    }
    r.token_accuracy =
        ref_total > 0 ? static_cast<double>(matched) / ref_total : 0.0;
    r.sequence_accuracy /= r.sequences;
    r.mean_loss /= r.sequences;
    return r;
}

std::vector<double> alpha_entropies(const SuperNetwork& net) {
    std::vector<double> out;
    auto entropy = [](const std::vector<double>& a) {
        double mx = a[0];
        for (double v : a) mx = std::max(mx, v);
        double z = 0.0;
        for (double v : a) z += std::exp(v - mx);
        double h = 0.0;
        for (double v : a) {
            double p = std::exp(v - mx) / z;
            if (p > 0) h -= p * std::log(p);
        }
        return h;
    };
    for (const auto& row : net.enc_nodes)
        for (const auto& node : row) out.push_back(entropy(node.alpha.values()));
    for (const auto& row : net.dec_nodes)
        for (const auto& node : row) out.push_back(entropy(node.alpha.values()));
    return out;
}

} // namespace revdarts
