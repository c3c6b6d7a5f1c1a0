#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace revdarts {

enum class Dtype { f32, f64 };

inline std::size_t dtype_bytes(Dtype dt) { return dt == Dtype::f32 ? 4 : 8; }
inline const char* dtype_name(Dtype dt) { return dt == Dtype::f32 ? "f32" : "f64"; }
Dtype dtype_from_name(const std::string& name);

// Values are held as doubles; in f32 mode every primitive output is rounded
// through float so the stored precision matches the declared dtype.
inline double cast_scalar(double v, Dtype dt) {
    return dt == Dtype::f32 ? static_cast<double>(static_cast<float>(v)) : v;
}

struct TapeState;

struct TensorData {
    std::vector<int> shape;
    Dtype dtype = Dtype::f64;
    std::vector<double> values;
    std::vector<double> grad; // empty until first accumulation
    bool requires_grad = false;
    std::weak_ptr<TapeState> tape;
    int node = -1;
};

class Tensor {
public:
    Tensor() = default;

    static Tensor leaf(std::vector<int> shape, Dtype dtype,
                       std::vector<double> values, bool requires_grad = false);
    static Tensor zeros(std::vector<int> shape, Dtype dtype,
                        bool requires_grad = false);
    static Tensor full(std::vector<int> shape, Dtype dtype, double value,
                       bool requires_grad = false);

    bool defined() const { return d_ != nullptr; }
    const std::vector<int>& shape() const { return d_->shape; }
    int dim(std::size_t i) const { return d_->shape[i]; }
    std::size_t rank() const { return d_->shape.size(); }
    std::size_t size() const { return d_->values.size(); }
    Dtype dtype() const { return d_->dtype; }
    bool requires_grad() const { return d_->requires_grad; }
    void set_requires_grad(bool v) { d_->requires_grad = v; }

    const std::vector<double>& values() const { return d_->values; }
    std::vector<double>& mutable_values() { return d_->values; }
    double at(std::size_t i) const { return d_->values[i]; }
    double at(std::size_t r, std::size_t c) const {
        return d_->values[r * d_->shape[1] + c];
    }

    // Gradient accumulator; allocated zero-filled on first touch.
    std::vector<double>& grad();
    bool has_grad() const { return !d_->grad.empty(); }
    std::vector<double> grad_or_zeros() const;
    void zero_grad() { d_->grad.clear(); }

    // Same values, no tape history.
    Tensor detach(bool requires_grad = false) const;

    bool same_object(const Tensor& other) const { return d_ == other.d_; }
    TensorData* impl() const { return d_.get(); }

private:
    std::shared_ptr<TensorData> d_;
    friend Tensor finish_op(std::vector<int>, Dtype, std::vector<double>,
                            std::vector<Tensor>,
                            std::function<void(const std::vector<Tensor>&,
                                               const Tensor&,
                                               const std::vector<double>&,
                                               class GradSink&)>);
};

std::size_t shape_size(const std::vector<int>& shape);
std::string shape_str(const std::vector<int>& shape);

// Where backward rules deposit per-input gradient contributions.
class GradSink {
public:
    virtual ~GradSink() = default;
    virtual std::span<double> slot(std::size_t input_index) = 0;
};

using BackwardFn =
    std::function<void(const std::vector<Tensor>& inputs, const Tensor& output,
                       const std::vector<double>& upstream, GradSink& sink)>;

struct TapeNode {
    std::vector<Tensor> inputs;
    Tensor output;
    BackwardFn backward;
};

struct TapeState {
    std::vector<TapeNode> nodes;
    long long retained_bytes = 0;
};

// Ordered record of primitive applications. A tape retains every node output
// (that is the stored-activation cost the ledger measures); destroying or
// clearing the tape releases them.
class Tape {
public:
    Tape();
    ~Tape();
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    // Reverse sweep from root, seeding with an explicit upstream gradient.
    // Leaf gradients accumulate; repeated calls compose additively.
    void backward_from(const Tensor& root, const Tensor& upstream);

    std::size_t node_count() const { return state_->nodes.size(); }
    void clear();

    std::shared_ptr<TapeState> state() const { return state_; }

private:
    std::shared_ptr<TapeState> state_;
};

// Innermost active tape records primitive applications; nullptr = no-grad.
Tape* active_tape();

class TapeScope {
public:
    explicit TapeScope(Tape& tape);
    ~TapeScope();
    TapeScope(const TapeScope&) = delete;
    TapeScope& operator=(const TapeScope&) = delete;

private:
    Tape* prev_;
};

class NoGradScope {
public:
    NoGradScope();
    ~NoGradScope();
    NoGradScope(const NoGradScope&) = delete;
    NoGradScope& operator=(const NoGradScope&) = delete;

private:
    Tape* prev_;
};

// Shared output path of every primitive: rounds values to dtype, and records
// a tape node when a tape is active and some input requires grad.
Tensor finish_op(std::vector<int> shape, Dtype dtype, std::vector<double> values,
                 std::vector<Tensor> inputs, BackwardFn backward);

[[noreturn]] void fail(const std::string& msg);

} // namespace revdarts
