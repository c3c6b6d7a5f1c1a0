#pragma once

#include <string>
#include <vector>

#include "revdarts/ops.hpp"
#include "revdarts/primitives.hpp"
#include "revdarts/rng.hpp"

namespace revdarts {

enum class Pooling { avg, max };

const char* pooling_name(Pooling p);
Pooling pooling_from_name(const std::string& name);

// One mixed-operation choice point: trainable logits over the candidate set,
// one parameterized instance per candidate, and the input pooling mode.
struct SearchNode {
    Tensor alpha; // [1 x |O|] leaf
    std::vector<OperationInstance> ops;
    Pooling pooling = Pooling::avg;
    Side side = Side::encoder;
};

SearchNode make_search_node(Side side, int width, Pooling pooling,
                            RngStream& rng, Dtype dtype);

// Elementwise reduction across the sibling splits' tensors.
Tensor pool_inputs(Pooling pooling, const std::vector<Tensor>& parts);

// softmax(alpha)-weighted sum over every candidate's output. Evaluating all
// candidates at once is the memory hot spot the reversible backbone absorbs.
Tensor mixed_forward(const SearchNode& node, const Tensor& h,
                     const AttentionContext& ctx, RngStream& rng);

// Pool the later X splits and earlier Y splits, then run the mixed op.
Tensor g_k_forward(const SearchNode& node, const std::vector<Tensor>& later_x,
                   const std::vector<Tensor>& earlier_y,
                   const AttentionContext& ctx, RngStream& rng);

// Single-path variant used by the uniform-sampling baseline: only the op at
// `index` runs; alpha is ignored.
Tensor g_k_forward_single(const SearchNode& node, int index,
                          const std::vector<Tensor>& later_x,
                          const std::vector<Tensor>& earlier_y,
                          const AttentionContext& ctx, RngStream& rng);

// argmax over alpha; ties resolved toward the lowest candidate index.
OperationKind discretize_node(const SearchNode& node);

// Uniform draw over the node's candidate list.
int sample_node_index(const SearchNode& node, RngStream& rng);

// Exact |O_enc|^(s*m) * |O_dec|^(s*n) as a decimal string.
std::string search_space_size(int op_count_enc, int op_count_dec, int m, int n,
                              int s);

// Learning-rate schedules for the two optimizers.
struct LrSchedule {
    enum class Kind { fixed, warmup_inv_sqrt } kind = Kind::fixed;
    double peak = 3e-4;
    int warmup_steps = 1; // warmup_inv_sqrt only

    double at(int step) const; // step counts from 1
};

struct AdamConfig {
    double beta1 = 0.9;
    double beta2 = 0.98;
    double eps = 1e-9;
    double weight_decay = 0.0; // decoupled, applied with the step's lr
    LrSchedule schedule;
};

// Adam over an explicit parameter registry. Gradients are read from each
// tensor's accumulator; step() consumes and clears them.
class Adam {
public:
    explicit Adam(AdamConfig cfg) : cfg_(cfg) {}

    void add_param(const Tensor& p);
    void add_params(const std::vector<Tensor>& ps);
    const std::vector<Tensor>& params() const { return params_; }

    void step();
    void zero_grads();
    int step_count() const { return t_; }

private:
    AdamConfig cfg_;
    std::vector<Tensor> params_;
    std::vector<std::vector<double>> m_, v_;
    int t_ = 0;
};

} // namespace revdarts
