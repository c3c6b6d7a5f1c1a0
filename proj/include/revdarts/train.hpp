#pragma once

#include <string>
#include <vector>

#include "revdarts/arch.hpp"
#include "revdarts/config.hpp"
#include "revdarts/data.hpp"
#include "revdarts/model.hpp"

namespace revdarts {

struct BilevelOptimizer {
    Adam theta;
    Adam alpha;
    int rejected_steps = 0;
};

BilevelOptimizer make_bilevel(const SuperNetwork& net, const SearchConfig& cfg,
                              int total_steps);

struct StepMetrics {
    int step = 0;
    double train_loss = 0.0;
    double val_loss = 0.0;
    long long retained_bytes = 0; // ledger peak during the step
    long long recompute_count = 0;
};

// One alternating update: theta on the train batch, then alpha on the val
// batch, both through the reversible backward. A non-finite loss rejects
// that half-step and leaves parameters untouched.
StepMetrics bilevel_step(const SuperNetwork& net, const Batch& train_batch,
                         const Batch& val_batch, BilevelOptimizer& opt,
                         RngStream& master, double label_smoothing);

// Uniform-sampling baseline: theta-only update along one sampled path.
StepMetrics sampled_step(const SuperNetwork& net, const Batch& train_batch,
                         const Batch& val_batch, BilevelOptimizer& opt,
                         RngStream& master, RngStream& path_rng,
                         double label_smoothing);

struct SearchResult {
    SuperNetwork net;
    std::vector<std::string> checkpoint_dirs;
    std::vector<StepMetrics> metrics;
    int rejected_steps = 0;
};

// Full search loop: checkpoints every interval (including step 0), metrics
// appended to metrics.jsonl, final arch.json from the discretized alphas.
SearchResult run_search(const RunConfig& cfg);

struct TrainResult {
    SuperNetwork net;
    std::vector<StepMetrics> metrics;
    bool aborted_non_finite = false;
};

// Retrains a discretized architecture with ordinary stored-activation
// backward. Checkpoints land in cfg.out_dir.
TrainResult train_derived(const Architecture& arch, const RunConfig& cfg);

struct EvalResult {
    double token_accuracy = 0.0;
    double sequence_accuracy = 0.0;
    double mean_loss = 0.0;
    int sequences = 0;
};

std::vector<int> greedy_decode(const SuperNetwork& net,
                               const std::vector<int>& src);

EvalResult evaluate(const SuperNetwork& net, const DataSpec& data, Shard shard,
                    int sequences, double label_smoothing);

// Shannon entropy of softmax(alpha) for every search node, encoder rows
// first.
std::vector<double> alpha_entropies(const SuperNetwork& net);

} // namespace revdarts
