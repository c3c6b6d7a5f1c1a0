#pragma once

#include <string>
#include <vector>

#include "json.hpp"
#include "revdarts/data.hpp"
#include "revdarts/model.hpp"

namespace revdarts {

enum class Mode { search, derive, train, eval, gradcheck, memprofile };
Mode mode_from_name(const std::string& name);
const char* mode_name(Mode m);

enum class SearchStrategy { darts, uniform_sampling };

struct SearchConfig {
    int steps = 200;
    int batch_size = 4;
    int checkpoint_interval = 100;
    SearchStrategy strategy = SearchStrategy::darts;
    double theta_peak_lr = 5e-4;
    double warmup_frac = 0.04;
    double alpha_lr = 3e-4;
    double alpha_weight_decay = 1e-3;
    double label_smoothing = 0.1;
};

struct TrainConfig {
    int steps = 1000;
    int batch_size = 8;
    double peak_lr = 5e-4;
    double warmup_frac = 0.04;
    double label_smoothing = 0.1;
    int log_interval = 50;
    std::string arch_path; // arch.json to realize
};

struct EvalConfig {
    int sequences = 64;
    std::string checkpoint; // checkpoint dir of a trained derived model
    std::string arch_path;
};

struct MemprofileConfig {
    std::vector<int> dims{96};
    std::vector<int> depths{1, 2, 4, 8};
    int seq_len = 12;
    long long byte_cap = 1LL << 32;
};

struct RunConfig {
    Mode mode = Mode::search;
    ModelDims dims;
    DataSpec data;
    Pooling pooling = Pooling::avg;
    double dropout = 0.0;
    Dtype dtype = Dtype::f64;
    std::uint64_t seed = 1;
    std::string out_dir = ".";
    std::string checkpoint; // input checkpoint for derive/eval
    SearchConfig search;
    TrainConfig train;
    EvalConfig eval;
    MemprofileConfig memprofile;

    void validate() const;
};

// Parse + validate a config JSON. `overrides` are dotted key=value pairs
// (e.g. search.steps=50) applied before parsing; unknown keys are rejected.
RunConfig config_from_json(const nlohmann::json& j, Mode mode);
RunConfig load_config(const std::string& path, Mode mode,
                      const std::vector<std::string>& overrides);
nlohmann::json config_to_json(const RunConfig& cfg);

// Apply one `a.b.c=value` override onto a JSON document in place.
void apply_override(nlohmann::json& j, const std::string& assignment);

} // namespace revdarts
