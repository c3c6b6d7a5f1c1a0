#include "revdarts/tensor.hpp"

#include <sstream>
#include <stdexcept>

#include "revdarts/ledger.hpp"

namespace revdarts {

void fail(const std::string& msg) { throw std::runtime_error(msg); }

Dtype dtype_from_name(const std::string& name) {
    if (name == "f32") return Dtype::f32;
    if (name == "f64") return Dtype::f64;
    fail("unknown dtype '" + name + "' (expected f32 or f64)");
}

std::size_t shape_size(const std::vector<int>& shape) {
    std::size_t n = 1;
    for (int e : shape) {
        if (e < 0) fail("negative extent in shape " + shape_str(shape));
        n *= static_cast<std::size_t>(e);
    }
    return n;
}

std::string shape_str(const std::vector<int>& shape) {
    std::ostringstream os;
    os << "[";
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) os << "x";
        os << shape[i];
    }
    os << "]";
    return os.str();
}

Tensor Tensor::leaf(std::vector<int> shape, Dtype dtype,
                    std::vector<double> values, bool requires_grad) {
    if (shape_size(shape) != values.size())
        fail("tensor data size " + std::to_string(values.size()) +
             " does not match shape " + shape_str(shape));
    Tensor t;
    t.d_ = std::make_shared<TensorData>();
    t.d_->shape = std::move(shape);
    t.d_->dtype = dtype;
    for (double& v : values) v = cast_scalar(v, dtype);
    t.d_->values = std::move(values);
    t.d_->requires_grad = requires_grad;
    return t;
}

Tensor Tensor::zeros(std::vector<int> shape, Dtype dtype, bool requires_grad) {
    std::size_t n = shape_size(shape);
    return leaf(std::move(shape), dtype, std::vector<double>(n, 0.0), requires_grad);
}

Tensor Tensor::full(std::vector<int> shape, Dtype dtype, double value,
                    bool requires_grad) {
    std::size_t n = shape_size(shape);
    return leaf(std::move(shape), dtype, std::vector<double>(n, value), requires_grad);
}

std::vector<double>& Tensor::grad() {
    if (d_->grad.empty()) d_->grad.assign(d_->values.size(), 0.0);
    return d_->grad;
}

std::vector<double> Tensor::grad_or_zeros() const {
    if (d_->grad.empty()) return std::vector<double>(d_->values.size(), 0.0);
    return d_->grad;
}

Tensor Tensor::detach(bool requires_grad) const {
    Tensor t;
    t.d_ = std::make_shared<TensorData>();
    t.d_->shape = d_->shape;
    t.d_->dtype = d_->dtype;
    t.d_->values = d_->values;
    t.d_->requires_grad = requires_grad;
    return t;
}

namespace {
thread_local Tape* t_active_tape = nullptr;
}

Tape* active_tape() { return t_active_tape; }

TapeScope::TapeScope(Tape& tape) : prev_(t_active_tape) { t_active_tape = &tape; }
TapeScope::~TapeScope() { t_active_tape = prev_; }

NoGradScope::NoGradScope() : prev_(t_active_tape) { t_active_tape = nullptr; }
NoGradScope::~NoGradScope() { t_active_tape = prev_; }

Tape::Tape() : state_(std::make_shared<TapeState>()) {}

Tape::~Tape() { clear(); }

void Tape::clear() {
    if (state_->retained_bytes > 0) {
        if (MemoryLedger* ledger = current_ledger()) {
            for (const TapeNode& node : state_->nodes)
                ledger->release(static_cast<long long>(node.output.size() *
                                                      dtype_bytes(node.output.dtype())));
        }
        state_->retained_bytes = 0;
    }
    state_->nodes.clear();
}

namespace {

class SweepSink final : public GradSink {
public:
    SweepSink(const std::shared_ptr<TapeState>& state,
              std::vector<std::vector<double>>& node_grads)
        : state_(state), node_grads_(node_grads) {}

    void set_node(const TapeNode* node) { node_ = node; }

    std::span<double> slot(std::size_t input_index) override {
        const Tensor& input = node_->inputs[input_index];
        TensorData* d = input.impl();
        auto producer = d->tape.lock();
        if (producer == state_ && d->node >= 0) {
            auto& buf = node_grads_[static_cast<std::size_t>(d->node)];
            if (buf.empty()) buf.assign(d->values.size(), 0.0);
            return buf;
        }
        if (d->requires_grad) {
            if (d->grad.empty()) d->grad.assign(d->values.size(), 0.0);
            return d->grad;
        }
        scratch_.assign(d->values.size(), 0.0);
        return scratch_;
    }

private:
    const std::shared_ptr<TapeState>& state_;
    std::vector<std::vector<double>>& node_grads_;
    const TapeNode* node_ = nullptr;
    std::vector<double> scratch_;
};

} // namespace

static void backward_sweep(const std::shared_ptr<TapeState>& state,
                           const Tensor& root, const Tensor& upstream) {
    TensorData* rd = root.impl();
    if (upstream.shape() != root.shape())
        fail("backward_from: upstream shape " + shape_str(upstream.shape()) +
             " does not match root shape " + shape_str(root.shape()));

    std::vector<std::vector<double>> node_grads(state->nodes.size());
    node_grads[static_cast<std::size_t>(rd->node)] = upstream.values();

    SweepSink sink(state, node_grads);
    for (int i = rd->node; i >= 0; --i) {
        auto& up = node_grads[static_cast<std::size_t>(i)];
        if (up.empty()) continue;
        const TapeNode& node = state->nodes[static_cast<std::size_t>(i)];
        sink.set_node(&node);
        node.backward(node.inputs, node.output, up, sink);
        up.clear();
        up.shrink_to_fit();
    }
}

void Tape::backward_from(const Tensor& root, const Tensor& upstream) {
    TensorData* rd = root.impl();
    if (rd->tape.lock() != state_ || rd->node < 0)
        fail("backward_from: root tensor is not on this tape");
    backward_sweep(state_, root, upstream);
}

void backward_from(const Tensor& root, const Tensor& upstream) {
    auto state = root.impl()->tape.lock();
    if (!state || root.impl()->node < 0)
        fail("backward_from: root tensor is not on a live tape");
    backward_sweep(state, root, upstream);
}

Tensor finish_op(std::vector<int> shape, Dtype dtype, std::vector<double> values,
                 std::vector<Tensor> inputs, BackwardFn backward) {
    if (shape_size(shape) != values.size())
        fail("primitive produced " + std::to_string(values.size()) +
             " scalars for shape " + shape_str(shape));
    for (double& v : values) v = cast_scalar(v, dtype);

    Tensor out;
    out.d_ = std::make_shared<TensorData>();
    out.d_->shape = std::move(shape);
    out.d_->dtype = dtype;
    out.d_->values = std::move(values);

    Tape* tape = active_tape();
    bool needs_grad = false;
    for (const Tensor& in : inputs)
        if (in.requires_grad()) needs_grad = true;
    if (tape != nullptr && needs_grad && backward) {
        auto state = tape->state();
        out.d_->tape = state;
        out.d_->node = static_cast<int>(state->nodes.size());
        out.d_->requires_grad = true;
        state->nodes.push_back(TapeNode{std::move(inputs), out, std::move(backward)});
        long long bytes =
            static_cast<long long>(out.size() * dtype_bytes(out.dtype()));
        state->retained_bytes += bytes;
        if (MemoryLedger* ledger = current_ledger()) ledger->retain(bytes);
    }
    return out;
}

} // namespace revdarts
