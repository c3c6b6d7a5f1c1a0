#include "revdarts/ops.hpp"

#include <cmath>

namespace revdarts {

namespace {

constexpr const char* kTags[kOperationKindCount] = {
    "std_conv_3", "std_conv_5", "std_conv_7", "std_conv_11",
    "dyn_conv_3", "dyn_conv_7", "dyn_conv_11", "dyn_conv_15",
    "self_attn",  "cross_attn", "glu",        "ffn",
    "zero",       "identity",
};

constexpr int kDynConvGroups = 8;

int std_conv_width(OperationKind kind) {
    switch (kind) {
        case OperationKind::StdConv3: return 3;
        case OperationKind::StdConv5: return 5;
        case OperationKind::StdConv7: return 7;
        case OperationKind::StdConv11: return 11;
        default: return 0;
    }
}

int dyn_conv_width(OperationKind kind) {
    switch (kind) {
        case OperationKind::DynConv3: return 3;
        case OperationKind::DynConv7: return 7;
        case OperationKind::DynConv11: return 11;
        case OperationKind::DynConv15: return 15;
        default: return 0;
    }
}

Tensor init_matrix(int rows, int cols, RngStream& rng, Dtype dtype) {
    std::vector<double> vals(static_cast<std::size_t>(rows) * cols);
    double sd = 1.0 / std::sqrt(static_cast<double>(rows));
    for (double& v : vals) v = sd * rng.next_normal();
    return Tensor::leaf({rows, cols}, dtype, std::move(vals), true);
}

Tensor init_vector(int n, double value, Dtype dtype) {
    return Tensor::full({n}, dtype, value, true);
}

} // namespace

int dyn_conv_groups() { return kDynConvGroups; }

const char* op_tag(OperationKind kind) {
    return kTags[static_cast<int>(kind)];
}

OperationKind op_from_tag(const std::string& tag) {
    for (int i = 0; i < kOperationKindCount; ++i)
        if (tag == kTags[i]) return static_cast<OperationKind>(i);
    fail("unknown operation tag '" + tag + "'");
}

const std::vector<OperationKind>& legal_ops(Side side) {
    static const std::vector<OperationKind> enc = [] {
        std::vector<OperationKind> v;
        for (int i = 0; i < kOperationKindCount; ++i)
            if (static_cast<OperationKind>(i) != OperationKind::CrossAttention)
                v.push_back(static_cast<OperationKind>(i));
        return v;
    }();
    static const std::vector<OperationKind> dec = [] {
        std::vector<OperationKind> v;
        for (int i = 0; i < kOperationKindCount; ++i)
            v.push_back(static_cast<OperationKind>(i));
        return v;
    }();
    return side == Side::encoder ? enc : dec;
}

const Tensor& OperationInstance::param(const std::string& name) const {
    for (const auto& [n, t] : params)
        if (n == name) return t;
    fail(std::string(op_tag(kind)) + ": no parameter named '" + name + "'");
}

std::vector<Tensor> OperationInstance::param_tensors() const {
    std::vector<Tensor> out;
    out.reserve(params.size());
    for (const auto& [n, t] : params) out.push_back(t);
    return out;
}

OperationInstance make_op(OperationKind kind, int width, RngStream& rng,
                          Dtype dtype) {
    if (width < 8 || width % 8 != 0)
        fail("operation width " + std::to_string(width) +
             " must be a positive multiple of 8");
    OperationInstance op;
    op.kind = kind;
    op.width = width;

    auto add_layer_norm = [&] {
        op.params.emplace_back("ln_gain", init_vector(width, 1.0, dtype));
        op.params.emplace_back("ln_bias", init_vector(width, 0.0, dtype));
    };

    if (int w = std_conv_width(kind); w > 0) {
        op.params.emplace_back("depthwise",
                               init_matrix(w, width, rng, dtype));
        op.params.emplace_back("pointwise", init_matrix(width, width, rng, dtype));
        op.params.emplace_back("bias", init_vector(width, 0.0, dtype));
        add_layer_norm();
        return op;
    }
    if (int w = dyn_conv_width(kind); w > 0) {
        op.params.emplace_back("proj",
                               init_matrix(width, kDynConvGroups * w, rng, dtype));
        add_layer_norm();
        return op;
    }
    switch (kind) {
        case OperationKind::SelfAttention:
        case OperationKind::CrossAttention:
            op.params.emplace_back("wq", init_matrix(width, width, rng, dtype));
            op.params.emplace_back("wk", init_matrix(width, width, rng, dtype));
            op.params.emplace_back("wv", init_matrix(width, width, rng, dtype));
            op.params.emplace_back("wo", init_matrix(width, width, rng, dtype));
            add_layer_norm();
            return op;
        case OperationKind::GLU:
            op.params.emplace_back("w", init_matrix(width, 2 * width, rng, dtype));
            op.params.emplace_back("b", init_vector(2 * width, 0.0, dtype));
            add_layer_norm();
            return op;
        case OperationKind::FFN:
            op.params.emplace_back("w1", init_matrix(width, 4 * width, rng, dtype));
            op.params.emplace_back("b1", init_vector(4 * width, 0.0, dtype));
            op.params.emplace_back("w2", init_matrix(4 * width, width, rng, dtype));
            op.params.emplace_back("b2", init_vector(width, 0.0, dtype));
            add_layer_norm();
            return op;
        case OperationKind::Zero:
        case OperationKind::Identity:
            return op;
        default:
            fail("make_op: unhandled kind");
    }
}

std::vector<OperationInstance> build_op_set(Side side, int width, RngStream& rng,
                                            Dtype dtype) {
    std::vector<OperationInstance> ops;
    for (OperationKind kind : legal_ops(side))
        ops.push_back(make_op(kind, width, rng, dtype));
    return ops;
}

namespace {

std::vector<double> causal_mask(int rows, int cols) {
    std::vector<double> mask(static_cast<std::size_t>(rows) * cols, 0.0);
    for (int i = 0; i < rows; ++i)
        for (int j = i + 1; j < cols; ++j)
            mask[static_cast<std::size_t>(i) * cols + j] = -1e30;
    return mask;
}

Tensor multi_head_attention(const OperationInstance& op, const Tensor& queries,
                            const Tensor& keys_values, bool causal) {
    int heads = op.head_count;
    Tensor q = matmul(queries, op.param("wq"));
    Tensor k = matmul(keys_values, op.param("wk"));
    Tensor v = matmul(keys_values, op.param("wv"));
    auto qh = split_cols(q, heads);
    auto kh = split_cols(k, heads);
    auto vh = split_cols(v, heads);
    double inv_sqrt_dh = 1.0 / std::sqrt(static_cast<double>(op.width / heads));
    std::vector<Tensor> out_heads;
    out_heads.reserve(static_cast<std::size_t>(heads));
    std::vector<double> mask;
    if (causal) mask = causal_mask(queries.dim(0), keys_values.dim(0));
    for (int h = 0; h < heads; ++h) {
        Tensor scores = scale(matmul(qh[static_cast<std::size_t>(h)],
                                     transpose(kh[static_cast<std::size_t>(h)])),
                              inv_sqrt_dh);
        Tensor att = causal ? softmax_rows_masked(scores, mask)
                            : softmax_rows(scores);
        out_heads.push_back(matmul(att, vh[static_cast<std::size_t>(h)]));
    }
    return matmul(concat_cols(out_heads), op.param("wo"));
}

Tensor op_kernel(const OperationInstance& op, const Tensor& h,
                 const AttentionContext& ctx) {
    ConvPadding pad = ctx.causal ? ConvPadding::causal : ConvPadding::symmetric;
    if (int w = std_conv_width(op.kind); w > 0) {
        Tensor dw = conv1d_depthwise(h, op.param("depthwise"), pad);
        return add_bias(matmul(dw, op.param("pointwise")), op.param("bias"));
    }
    if (int w = dyn_conv_width(op.kind); w > 0) {
        Tensor logits = matmul(h, op.param("proj"));
        Tensor weights = softmax_blocks(logits, w);
        return dynamic_conv_apply(h, weights, kDynConvGroups, w, pad);
    }
    switch (op.kind) {
        case OperationKind::SelfAttention:
            return multi_head_attention(op, h, h, ctx.causal);
        case OperationKind::CrossAttention:
            if (!ctx.memory.defined())
                fail("cross_attn: attention context has no memory tensor");
            if (ctx.memory.dim(1) != op.width)
                fail("cross_attn: memory width " +
                     std::to_string(ctx.memory.dim(1)) + " != op width " +
                     std::to_string(op.width));
            return multi_head_attention(op, h, ctx.memory, false);
        case OperationKind::GLU: {
            Tensor z = add_bias(matmul(h, op.param("w")), op.param("b"));
            auto halves = split_cols(z, 2);
            return mul(halves[0], sigmoid(halves[1]));
        }
        case OperationKind::FFN: {
            Tensor inner =
                relu(add_bias(matmul(h, op.param("w1")), op.param("b1")));
            return add_bias(matmul(inner, op.param("w2")), op.param("b2"));
        }
        default:
            fail("op_kernel: unhandled kind");
    }
}

void check_finite(const Tensor& t, OperationKind kind) {
    for (std::size_t i = 0; i < t.size(); ++i)
        if (!std::isfinite(t.at(i)))
            fail(std::string(op_tag(kind)) + ": non-finite value in output");
}

} // namespace

Tensor apply_op(const OperationInstance& op, const Tensor& h,
                const AttentionContext& ctx, RngStream& rng) {
    if (h.rank() != 2 || h.dim(1) != op.width)
        fail(std::string(op_tag(op.kind)) + ": input " + shape_str(h.shape()) +
             " does not match op width " + std::to_string(op.width));
    if (op.kind == OperationKind::Zero)
        return Tensor::zeros(h.shape(), h.dtype());
    if (op.kind == OperationKind::Identity) return h;

    Tensor o = op_kernel(op, h, ctx);
    if (ctx.dropout_p > 0.0) o = dropout(o, ctx.dropout_p, rng.next_u64(), 0);
    Tensor out = layer_norm(add(h, o), op.param("ln_gain"), op.param("ln_bias"));
    check_finite(out, op.kind);
    return out;
}

} // namespace revdarts
