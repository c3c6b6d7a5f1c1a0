#include "revdarts/search.hpp"

#include <boost/multiprecision/cpp_int.hpp>
#include <cmath>

namespace revdarts {

const char* pooling_name(Pooling p) { return p == Pooling::avg ? "avg" : "max"; }

Pooling pooling_from_name(const std::string& name) {
    if (name == "avg") return Pooling::avg;
    if (name == "max") return Pooling::max;
    fail("unknown pooling '" + name + "' (expected avg or max)");
}

SearchNode make_search_node(Side side, int width, Pooling pooling,
                            RngStream& rng, Dtype dtype) {
    SearchNode node;
    node.pooling = pooling;
    node.side = side;
    node.ops = build_op_set(side, width, rng, dtype);
    int k = static_cast<int>(node.ops.size());
    std::vector<double> a(static_cast<std::size_t>(k));
    for (double& v : a) v = 1e-3 * rng.next_normal();
    node.alpha = Tensor::leaf({1, k}, dtype, std::move(a), true);
    return node;
}

Tensor pool_inputs(Pooling pooling, const std::vector<Tensor>& parts) {
    if (parts.empty()) fail("pool_inputs: no parts");
    return pooling == Pooling::avg ? mean_stack(parts) : max_stack(parts);
}

Tensor mixed_forward(const SearchNode& node, const Tensor& h,
                     const AttentionContext& ctx, RngStream& rng) {
    Tensor weights = softmax_rows(node.alpha);
    std::vector<Tensor> outs;
    outs.reserve(node.ops.size());
    for (const auto& op : node.ops) outs.push_back(apply_op(op, h, ctx, rng));
    return weighted_sum(outs, weights);
}

namespace {

std::vector<Tensor> joined(const std::vector<Tensor>& later_x,
                           const std::vector<Tensor>& earlier_y) {
    std::vector<Tensor> parts = later_x;
    parts.insert(parts.end(), earlier_y.begin(), earlier_y.end());
    return parts;
}

} // namespace

Tensor g_k_forward(const SearchNode& node, const std::vector<Tensor>& later_x,
                   const std::vector<Tensor>& earlier_y,
                   const AttentionContext& ctx, RngStream& rng) {
    return mixed_forward(node, pool_inputs(node.pooling, joined(later_x, earlier_y)),
                         ctx, rng);
}

Tensor g_k_forward_single(const SearchNode& node, int index,
                          const std::vector<Tensor>& later_x,
                          const std::vector<Tensor>& earlier_y,
                          const AttentionContext& ctx, RngStream& rng) {
    if (index < 0 || index >= static_cast<int>(node.ops.size()))
        fail("g_k_forward_single: op index " + std::to_string(index) +
             " out of range");
    Tensor pooled = pool_inputs(node.pooling, joined(later_x, earlier_y));
    return apply_op(node.ops[static_cast<std::size_t>(index)], pooled, ctx, rng);
}

OperationKind discretize_node(const SearchNode& node) {
    const auto& a = node.alpha.values();
    std::size_t best = 0;
    for (std::size_t i = 1; i < a.size(); ++i)
        if (a[i] > a[best]) best = i;
    return node.ops[best].kind;
}

int sample_node_index(const SearchNode& node, RngStream& rng) {
    return static_cast<int>(rng.next_u64() % node.ops.size());
}

std::string search_space_size(int op_count_enc, int op_count_dec, int m, int n,
                              int s) {
    if (op_count_enc <= 0 || op_count_dec <= 0 || m <= 0 || n <= 0 || s <= 0)
        fail("search_space_size: all arguments must be positive");
    namespace mp = boost::multiprecision;
    mp::cpp_int total = mp::pow(mp::cpp_int(op_count_enc), static_cast<unsigned>(s * m)) *
                        mp::pow(mp::cpp_int(op_count_dec), static_cast<unsigned>(s * n));
    return total.str();
}

double LrSchedule::at(int step) const {
    if (step < 1) fail("LrSchedule: step counts from 1");
    if (kind == Kind::fixed) return peak;
    int w = std::max(1, warmup_steps);
    if (step <= w) return peak * static_cast<double>(step) / w;
    return peak * std::sqrt(static_cast<double>(w) / step);
}

void Adam::add_param(const Tensor& p) {
    if (!p.requires_grad())
        fail("Adam: parameter does not require gradients");
    for (const Tensor& q : params_)
        if (q.same_object(p)) fail("Adam: parameter registered twice");
    params_.push_back(p);
    m_.emplace_back(p.size(), 0.0);
    v_.emplace_back(p.size(), 0.0);
}

void Adam::add_params(const std::vector<Tensor>& ps) {
    for (const Tensor& p : ps) add_param(p);
}

void Adam::step() {
    ++t_;
    double lr = cfg_.schedule.at(t_);
    double bc1 = 1.0 - std::pow(cfg_.beta1, t_);
    double bc2 = 1.0 - std::pow(cfg_.beta2, t_);
    for (std::size_t p = 0; p < params_.size(); ++p) {
        Tensor& param = params_[p];
        std::vector<double> g = param.grad_or_zeros();
        auto& vals = param.mutable_values();
        Dtype dt = param.dtype();
        for (std::size_t i = 0; i < vals.size(); ++i) {
            m_[p][i] = cfg_.beta1 * m_[p][i] + (1.0 - cfg_.beta1) * g[i];
            v_[p][i] = cfg_.beta2 * v_[p][i] + (1.0 - cfg_.beta2) * g[i] * g[i];
            double mhat = m_[p][i] / bc1;
            double vhat = v_[p][i] / bc2;
            double update = mhat / (std::sqrt(vhat) + cfg_.eps);
            if (cfg_.weight_decay > 0.0) update += cfg_.weight_decay * vals[i];
            vals[i] = cast_scalar(vals[i] - lr * update, dt);
        }
        param.zero_grad();
    }
}

void Adam::zero_grads() {
    for (Tensor& p : params_) p.zero_grad();
}

} // namespace revdarts
