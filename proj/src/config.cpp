#include "revdarts/config.hpp"

#include <filesystem>
#include <fstream>

namespace revdarts {

Mode mode_from_name(const std::string& name) {
    if (name == "search") return Mode::search;
    if (name == "derive") return Mode::derive;
    if (name == "train") return Mode::train;
    if (name == "eval") return Mode::eval;
    if (name == "gradcheck") return Mode::gradcheck;
    if (name == "memprofile") return Mode::memprofile;
    fail("unknown mode '" + name +
         "' (expected search, derive, train, eval, gradcheck or memprofile)");
}

const char* mode_name(Mode m) {
    switch (m) {
        case Mode::search: return "search";
        case Mode::derive: return "derive";
        case Mode::train: return "train";
        case Mode::eval: return "eval";
        case Mode::gradcheck: return "gradcheck";
        case Mode::memprofile: return "memprofile";
    }
    fail("unknown mode");
}

namespace {

void reject_unknown(const nlohmann::json& j, const char* section,
                    std::initializer_list<const char*> allowed) {
    for (const auto& [key, _] : j.items()) {
        bool ok = false;
        for (const char* a : allowed)
            if (key == a) ok = true;
        if (!ok)
            fail(std::string("config: unknown field '") + section + "." + key +
                 "'");
    }
}

} // namespace

void RunConfig::validate() const {
    dims.validate();
    data.validate();
    if (data.vocab != dims.vocab)
        fail("config: data.vocab=" + std::to_string(data.vocab) +
             " disagrees with dims.vocab=" + std::to_string(dims.vocab));
    if (data.l_max + 1 > dims.l_max)
        fail("config: data.l_max+1 exceeds dims.l_max (targets carry a marker)");
    if (dropout < 0.0 || dropout >= 1.0)
        fail("config: dropout must be in [0, 1)");
    if (search.steps < 0 || search.batch_size < 1 ||
        search.checkpoint_interval < 1)
        fail("config: search budgets must be non-negative (interval >= 1)");
    if (train.steps < 0 || train.batch_size < 1 || train.log_interval < 1)
        fail("config: train budgets must be non-negative (interval >= 1)");
    if (eval.sequences < 1) fail("config: eval.sequences must be >= 1");
    for (int d : memprofile.dims)
        if (d < 8) fail("config: memprofile.dims entries must be >= 8");
    for (int dep : memprofile.depths)
        if (dep < 1) fail("config: memprofile.depths entries must be >= 1");
    if (memprofile.seq_len < 2) fail("config: memprofile.seq_len must be >= 2");

    auto must_exist = [](const std::string& path, const char* field) {
        if (path.empty())
            fail(std::string("config: required path field '") + field +
                 "' is empty");
        if (!std::filesystem::exists(path))
            fail(std::string("config: ") + field + " path '" + path +
                 "' does not exist");
    };
    if (mode == Mode::train) must_exist(train.arch_path, "train.arch");
    if (mode == Mode::derive) must_exist(checkpoint, "checkpoint");
    if (mode == Mode::eval) {
        must_exist(eval.arch_path, "eval.arch");
        must_exist(eval.checkpoint, "eval.checkpoint");
    }
}

RunConfig config_from_json(const nlohmann::json& j, Mode mode) {
    RunConfig cfg;
    cfg.mode = mode;
    reject_unknown(j, "",
                   {"dims", "data", "pooling", "dropout", "dtype", "seed",
                    "out", "checkpoint", "search", "train", "eval",
                    "memprofile"});
    if (j.contains("dims")) {
        const auto& d = j.at("dims");
        reject_unknown(d, "dims",
                       {"vocab", "e", "d", "m", "n", "s", "enc_layers",
                        "dec_layers", "l_max"});
        cfg.dims.vocab = d.value("vocab", cfg.dims.vocab);
        cfg.dims.e = d.value("e", cfg.dims.e);
        cfg.dims.d = d.value("d", cfg.dims.d);
        cfg.dims.m = d.value("m", cfg.dims.m);
        cfg.dims.n = d.value("n", cfg.dims.n);
        cfg.dims.s = d.value("s", cfg.dims.s);
        cfg.dims.enc_layers = d.value("enc_layers", cfg.dims.s);
        cfg.dims.dec_layers = d.value("dec_layers", cfg.dims.s);
        cfg.dims.l_max = d.value("l_max", cfg.dims.l_max);
    }
    if (j.contains("data")) {
        const auto& d = j.at("data");
        reject_unknown(d, "data", {"task", "vocab", "l_min", "l_max", "seed"});
        cfg.data.task = task_from_name(d.value("task", std::string("copy")));
        cfg.data.vocab = d.value("vocab", cfg.dims.vocab);
        cfg.data.l_min = d.value("l_min", cfg.data.l_min);
        cfg.data.l_max = d.value("l_max", cfg.data.l_max);
        cfg.data.seed = d.value("seed", cfg.data.seed);
    } else {
        cfg.data.vocab = cfg.dims.vocab;
    }
    cfg.pooling = pooling_from_name(j.value("pooling", std::string("avg")));
    cfg.dropout = j.value("dropout", 0.0);
    cfg.dtype = dtype_from_name(j.value("dtype", std::string("f64")));
    cfg.seed = j.value("seed", std::uint64_t{1});
    cfg.out_dir = j.value("out", std::string("."));
    cfg.checkpoint = j.value("checkpoint", std::string());
    if (j.contains("search")) {
        const auto& s = j.at("search");
        reject_unknown(s, "search",
                       {"steps", "batch_size", "checkpoint_interval",
                        "strategy", "theta_peak_lr", "warmup_frac", "alpha_lr",
                        "alpha_weight_decay", "label_smoothing"});
        cfg.search.steps = s.value("steps", cfg.search.steps);
        cfg.search.batch_size = s.value("batch_size", cfg.search.batch_size);
        cfg.search.checkpoint_interval =
            s.value("checkpoint_interval", cfg.search.checkpoint_interval);
        std::string strat = s.value("strategy", std::string("darts"));
        if (strat == "darts")
            cfg.search.strategy = SearchStrategy::darts;
        else if (strat == "uniform_sampling")
            cfg.search.strategy = SearchStrategy::uniform_sampling;
        else
            fail("config: unknown search.strategy '" + strat + "'");
        cfg.search.theta_peak_lr =
            s.value("theta_peak_lr", cfg.search.theta_peak_lr);
        cfg.search.warmup_frac = s.value("warmup_frac", cfg.search.warmup_frac);
        cfg.search.alpha_lr = s.value("alpha_lr", cfg.search.alpha_lr);
        cfg.search.alpha_weight_decay =
            s.value("alpha_weight_decay", cfg.search.alpha_weight_decay);
        cfg.search.label_smoothing =
            s.value("label_smoothing", cfg.search.label_smoothing);
    }
    if (j.contains("train")) {
        const auto& t = j.at("train");
        reject_unknown(t, "train",
                       {"steps", "batch_size", "peak_lr", "warmup_frac",
                        "label_smoothing", "log_interval", "arch"});
        cfg.train.steps = t.value("steps", cfg.train.steps);
        cfg.train.batch_size = t.value("batch_size", cfg.train.batch_size);
        cfg.train.peak_lr = t.value("peak_lr", cfg.train.peak_lr);
        cfg.train.warmup_frac = t.value("warmup_frac", cfg.train.warmup_frac);
        cfg.train.label_smoothing =
            t.value("label_smoothing", cfg.train.label_smoothing);
        cfg.train.log_interval = t.value("log_interval", cfg.train.log_interval);
        cfg.train.arch_path = t.value("arch", std::string());
    }
    if (j.contains("eval")) {
        const auto& e = j.at("eval");
        reject_unknown(e, "eval", {"sequences", "checkpoint", "arch"});
        cfg.eval.sequences = e.value("sequences", cfg.eval.sequences);
        cfg.eval.checkpoint = e.value("checkpoint", std::string());
        cfg.eval.arch_path = e.value("arch", std::string());
    }
    if (j.contains("memprofile")) {
        const auto& m = j.at("memprofile");
        reject_unknown(m, "memprofile",
                       {"dims", "depths", "seq_len", "byte_cap"});
        if (m.contains("dims"))
            cfg.memprofile.dims = m.at("dims").get<std::vector<int>>();
        if (m.contains("depths"))
            cfg.memprofile.depths = m.at("depths").get<std::vector<int>>();
        cfg.memprofile.seq_len = m.value("seq_len", cfg.memprofile.seq_len);
        cfg.memprofile.byte_cap = m.value("byte_cap", cfg.memprofile.byte_cap);
    }
    cfg.validate();
    return cfg;
}

void apply_override(nlohmann::json& j, const std::string& assignment) {
    auto eq = assignment.find('=');
    if (eq == std::string::npos || eq == 0)
        fail("--set expects key=value, got '" + assignment + "'");
    std::string key = assignment.substr(0, eq);
    std::string raw = assignment.substr(eq + 1);
    nlohmann::json value;
    try {
        value = nlohmann::json::parse(raw);
    } catch (const nlohmann::json::exception&) {
        value = raw; // bare strings are legal values
    }
    nlohmann::json* cursor = &j;
    std::size_t start = 0;
    while (true) {
        auto dot = key.find('.', start);
        std::string part = key.substr(start, dot - start);
        if (part.empty()) fail("--set key has an empty segment: '" + key + "'");
        if (dot == std::string::npos) {
            (*cursor)[part] = value;
            return;
        }
        cursor = &(*cursor)[part];
        start = dot + 1;
    }
}

RunConfig load_config(const std::string& path, Mode mode,
                      const std::vector<std::string>& overrides) {
    std::ifstream in(path);
    if (!in) fail("cannot read config file '" + path + "'");
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        fail(path + ": " + e.what());
    }
    for (const auto& o : overrides) apply_override(j, o);
    return config_from_json(j, mode);
}

nlohmann::json config_to_json(const RunConfig& cfg) {
    nlohmann::json j;
    j["dims"] = {{"vocab", cfg.dims.vocab},
                 {"e", cfg.dims.e},
                 {"d", cfg.dims.d},
                 {"m", cfg.dims.m},
                 {"n", cfg.dims.n},
                 {"s", cfg.dims.s},
                 {"enc_layers", cfg.dims.enc_layers},
                 {"dec_layers", cfg.dims.dec_layers},
                 {"l_max", cfg.dims.l_max}};
    j["data"] = {{"task", task_name(cfg.data.task)},
                 {"vocab", cfg.data.vocab},
                 {"l_min", cfg.data.l_min},
                 {"l_max", cfg.data.l_max},
                 {"seed", cfg.data.seed}};
    j["pooling"] = pooling_name(cfg.pooling);
    j["dropout"] = cfg.dropout;
    j["dtype"] = dtype_name(cfg.dtype);
    j["seed"] = cfg.seed;
    j["out"] = cfg.out_dir;
    if (!cfg.checkpoint.empty()) j["checkpoint"] = cfg.checkpoint;
    j["search"] = {
        {"steps", cfg.search.steps},
        {"batch_size", cfg.search.batch_size},
        {"checkpoint_interval", cfg.search.checkpoint_interval},
        {"strategy", cfg.search.strategy == SearchStrategy::darts
                         ? "darts"
                         : "uniform_sampling"},
        {"theta_peak_lr", cfg.search.theta_peak_lr},
        {"warmup_frac", cfg.search.warmup_frac},
        {"alpha_lr", cfg.search.alpha_lr},
        {"alpha_weight_decay", cfg.search.alpha_weight_decay},
        {"label_smoothing", cfg.search.label_smoothing}};
    j["train"] = {{"steps", cfg.train.steps},
                  {"batch_size", cfg.train.batch_size},
                  {"peak_lr", cfg.train.peak_lr},
                  {"warmup_frac", cfg.train.warmup_frac},
                  {"label_smoothing", cfg.train.label_smoothing},
                  {"log_interval", cfg.train.log_interval},
                  {"arch", cfg.train.arch_path}};
    j["eval"] = {{"sequences", cfg.eval.sequences},
                 {"checkpoint", cfg.eval.checkpoint},
                 {"arch", cfg.eval.arch_path}};
    j["memprofile"] = {{"dims", cfg.memprofile.dims},
                       {"depths", cfg.memprofile.depths},
                       {"seq_len", cfg.memprofile.seq_len},
                       {"byte_cap", cfg.memprofile.byte_cap}};
    return j;
}

} // namespace revdarts
