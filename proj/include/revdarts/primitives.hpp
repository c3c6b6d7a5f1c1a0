#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "json.hpp"
#include "revdarts/tensor.hpp"

namespace revdarts {

// elementwise
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double c);
Tensor relu(const Tensor& a);
Tensor sigmoid(const Tensor& a);

// rank-2 linear algebra
Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& a);
Tensor add_bias(const Tensor& a, const Tensor& bias); // bias broadcast over rows

// column-axis shape ops (axis 1 of rank-2 tensors)
Tensor slice_cols(const Tensor& a, int start, int width);
Tensor concat_cols(const std::vector<Tensor>& parts);
std::vector<Tensor> split_cols(const Tensor& a, int parts);

// reductions
Tensor sum_all(const Tensor& a); // -> shape [1]
Tensor reduce_mean(const Tensor& a, int axis);
Tensor reduce_max(const Tensor& a, int axis);

// stack-axis pooling over a list of same-shape tensors
Tensor mean_stack(const std::vector<Tensor>& parts);
Tensor max_stack(const std::vector<Tensor>& parts);

// out = sum_k weights[k] * parts[k]; gradient flows to both
Tensor weighted_sum(const std::vector<Tensor>& parts, const Tensor& weights);

// row-wise softmax; the masked variant adds a constant bias (e.g. -1e30 for
// causal masking) to the logits before normalizing
Tensor softmax_rows(const Tensor& a);
Tensor softmax_rows_masked(const Tensor& a, const std::vector<double>& mask);
// softmax over consecutive column blocks of width `block` within each row
Tensor softmax_blocks(const Tensor& a, int block);

Tensor layer_norm(const Tensor& a, const Tensor& gain, const Tensor& bias,
                  double eps = 1e-5);

Tensor embedding_rows(const Tensor& table, const std::vector<int>& ids);

enum class ConvPadding { symmetric, causal };

// depthwise 1-D convolution; x [l x c], kernel [w x c], zero padding
Tensor conv1d_depthwise(const Tensor& x, const Tensor& kernel, ConvPadding pad);

// per-position depthwise convolution with position-dependent tap weights;
// weights [l x groups*taps] (normalized upstream), channels tied per group
Tensor dynamic_conv_apply(const Tensor& x, const Tensor& weights, int groups,
                          int taps, ConvPadding pad);

// mask regenerated from (seed, position) in both forward and backward
Tensor dropout(const Tensor& x, double p, std::uint64_t seed,
               std::uint64_t position);

// mean over positions with weight > 0; weights are typically a 0/1 pad mask
Tensor cross_entropy_label_smoothed(const Tensor& logits,
                                    const std::vector<int>& targets,
                                    double smoothing,
                                    const std::vector<double>& weights);

// backward entry point matching the tape the root was recorded on
void backward_from(const Tensor& root, const Tensor& upstream);

// String-keyed dispatch over the primitive set.
Tensor apply_primitive(const std::string& kind, const std::vector<Tensor>& inputs,
                       const nlohmann::json& attrs);

// Central-difference gradient of a scalar-valued function; the independent
// oracle all backward rules are checked against.
Tensor finite_diff_gradient(const std::function<double(const Tensor&)>& f,
                            const Tensor& x, double h);

} // namespace revdarts
