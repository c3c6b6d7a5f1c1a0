#pragma once

#include <string>
#include <utility>
#include <vector>

#include "revdarts/primitives.hpp"
#include "revdarts/rng.hpp"
#include "revdarts/tensor.hpp"

namespace revdarts {

// Fixed canonical order; the tags below are also the strings used in
// architecture JSON files.
enum class OperationKind {
    StdConv3,
    StdConv5,
    StdConv7,
    StdConv11,
    DynConv3,
    DynConv7,
    DynConv11,
    DynConv15,
    SelfAttention,
    CrossAttention,
    GLU,
    FFN,
    Zero,
    Identity,
};

inline constexpr int kOperationKindCount = 14;

const char* op_tag(OperationKind kind);
OperationKind op_from_tag(const std::string& tag);

enum class Side { encoder, decoder };

// Encoder-legal excludes CrossAttention (13 kinds); decoder-legal has all 14.
const std::vector<OperationKind>& legal_ops(Side side);

// One candidate operation o with its weights and the residual + layer-norm
// wrapper parameters. Zero and Identity carry no parameters.
struct OperationInstance {
    OperationKind kind = OperationKind::Identity;
    int width = 0;
    int head_count = 8;
    std::vector<std::pair<std::string, Tensor>> params;

    const Tensor& param(const std::string& name) const;
    std::vector<Tensor> param_tensors() const;
};

struct AttentionContext {
    Tensor memory;        // [l_src x width]; required iff CrossAttention
    bool causal = false;  // decoder self-attention / convolutions are left-only
    double dropout_p = 0.0;
};

OperationInstance make_op(OperationKind kind, int width, RngStream& rng,
                          Dtype dtype);

// 13 (encoder) or 14 (decoder) freshly initialized instances in canonical
// tag order. Width must be a positive multiple of 8 (attention heads).
std::vector<OperationInstance> build_op_set(Side side, int width, RngStream& rng,
                                            Dtype dtype);

// o_tilde(H) = LayerNorm(H + dropout(o(H))) for parameterized kinds;
// Zero returns zeros of H's shape, Identity returns H itself.
Tensor apply_op(const OperationInstance& op, const Tensor& h,
                const AttentionContext& ctx, RngStream& rng);

int dyn_conv_groups();

} // namespace revdarts
