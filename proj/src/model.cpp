#include "revdarts/model.hpp"

#include <cmath>
#include <numeric>

namespace revdarts {

void ModelDims::validate() const {
    if (vocab < 4) fail("dims.vocab must be >= 4 (pad/bos/eos/unk reserved)");
    if (e < 1 || e >= d)
        fail("dims.e must satisfy 1 <= e < d, got e=" + std::to_string(e) +
             " d=" + std::to_string(d));
    if (m < 2) fail("dims.m must be >= 2");
    if (n < 1) fail("dims.n must be >= 1");
    if (d % m != 0)
        fail("dims.d=" + std::to_string(d) + " not divisible by m=" +
             std::to_string(m));
    if (d % (n + 1) != 0)
        fail("dims.d=" + std::to_string(d) + " not divisible by n+1=" +
             std::to_string(n + 1));
    if (enc_split_width() % 8 != 0 || dec_split_width() % 8 != 0)
        fail("split widths must be multiples of 8, got encoder " +
             std::to_string(enc_split_width()) + " / decoder " +
             std::to_string(dec_split_width()));
    if (s < 1) fail("dims.s must be >= 1");
    if (enc_layers < 1 || dec_layers < 1) fail("layer counts must be >= 1");
    if (l_max < 2) fail("dims.l_max must be >= 2");
}

FactorizedEmbedding make_embedding(const ModelDims& dims, RngStream& rng,
                                   Dtype dtype) {
    auto init = [&](int rows, int cols) {
        std::vector<double> v(static_cast<std::size_t>(rows) * cols);
        double sd = 1.0 / std::sqrt(static_cast<double>(cols));
        for (double& x : v) x = sd * rng.next_normal();
        return Tensor::leaf({rows, cols}, dtype, std::move(v), true);
    };
    FactorizedEmbedding emb;
    emb.vocab_to_e = init(dims.vocab, dims.e);
    emb.e_to_d = init(dims.e, dims.d);
    emb.pos = init(dims.l_max, dims.d);
    return emb;
}

Tensor embed_sequence(const FactorizedEmbedding& emb,
                      const std::vector<int>& ids) {
    if (ids.empty()) fail("embed_sequence: empty sequence");
    if (static_cast<int>(ids.size()) > emb.pos.dim(0))
        fail("sequence length " + std::to_string(ids.size()) +
             " exceeds l_max " + std::to_string(emb.pos.dim(0)));
    Tensor x = matmul(embedding_rows(emb.vocab_to_e, ids), emb.e_to_d);
    std::vector<int> positions(ids.size());
    std::iota(positions.begin(), positions.end(), 0);
    return add(x, embedding_rows(emb.pos, positions));
}

Tensor output_logits(const FactorizedEmbedding& emb, const Tensor& h) {
    return matmul(matmul(h, transpose(emb.e_to_d)), transpose(emb.vocab_to_e));
}

SuperNetwork make_supernet(const ModelDims& dims, Pooling pooling,
                           double dropout_p, Dtype dtype, RngStream& rng) {
    dims.validate();
    SuperNetwork net;
    net.dims = dims;
    net.dtype = dtype;
    net.pooling = pooling;
    net.dropout_p = dropout_p;
    net.embed = make_embedding(dims, rng, dtype);
    {
        std::vector<double> v(static_cast<std::size_t>(dims.d) *
                              dims.dec_split_width());
        double sd = 1.0 / std::sqrt(static_cast<double>(dims.d));
        for (double& x : v) x = sd * rng.next_normal();
        net.mem_proj = Tensor::leaf({dims.d, dims.dec_split_width()}, dtype,
                                    std::move(v), true);
    }
    for (int b = 0; b < dims.s; ++b) {
        std::vector<SearchNode> enc_row, dec_row;
        for (int k = 0; k < dims.m; ++k)
            enc_row.push_back(make_search_node(Side::encoder,
                                               dims.enc_split_width(), pooling,
                                               rng, dtype));
        for (int k = 0; k < dims.n; ++k)
            dec_row.push_back(make_search_node(Side::decoder,
                                               dims.dec_split_width(), pooling,
                                               rng, dtype));
        net.enc_nodes.push_back(std::move(enc_row));
        net.dec_nodes.push_back(std::move(dec_row));
        net.dec_cross.push_back(make_op(OperationKind::CrossAttention,
                                        dims.dec_split_width(), rng, dtype));
    }
    return net;
}

std::vector<Tensor> SuperNetwork::theta_params() const {
    std::vector<Tensor> out{embed.vocab_to_e, embed.e_to_d, embed.pos, mem_proj};
    auto add_node_ops = [&](const SearchNode& node) {
        for (const auto& op : node.ops)
            for (const Tensor& t : op.param_tensors()) out.push_back(t);
    };
    for (const auto& row : enc_nodes)
        for (const auto& node : row) add_node_ops(node);
    for (const auto& row : dec_nodes)
        for (const auto& node : row) add_node_ops(node);
    for (const auto& op : dec_cross)
        for (const Tensor& t : op.param_tensors()) out.push_back(t);
    return out;
}

std::vector<Tensor> SuperNetwork::alpha_params() const {
    std::vector<Tensor> out;
    for (const auto& row : enc_nodes)
        for (const auto& node : row)
            if (node.alpha.requires_grad()) out.push_back(node.alpha);
    for (const auto& row : dec_nodes)
        for (const auto& node : row)
            if (node.alpha.requires_grad()) out.push_back(node.alpha);
    return out;
}

PathAssignment sample_uniform_path(const SuperNetwork& net, RngStream& rng) {
    PathAssignment path;
    for (const auto& row : net.enc_nodes) {
        std::vector<int> ids;
        for (const auto& node : row) ids.push_back(sample_node_index(node, rng));
        path.enc.push_back(std::move(ids));
    }
    for (const auto& row : net.dec_nodes) {
        std::vector<int> ids;
        for (const auto& node : row) ids.push_back(sample_node_index(node, rng));
        path.dec.push_back(std::move(ids));
    }
    return path;
}

namespace {

GFunction node_g(const SearchNode* node, AttentionContext ctx, int path_index) {
    return [node, ctx, path_index](const std::vector<Tensor>& later,
                                   const std::vector<Tensor>& earlier,
                                   RngStream& rng) {
        if (path_index >= 0)
            return g_k_forward_single(*node, path_index, later, earlier, ctx, rng);
        return g_k_forward(*node, later, earlier, ctx, rng);
    };
}

GFunction fixed_g(const OperationInstance* op, Pooling pooling,
                  AttentionContext ctx) {
    return [op, pooling, ctx](const std::vector<Tensor>& later,
                              const std::vector<Tensor>& earlier,
                              RngStream& rng) {
        std::vector<Tensor> parts = later;
        parts.insert(parts.end(), earlier.begin(), earlier.end());
        return apply_op(*op, pool_inputs(pooling, parts), ctx, rng);
    };
}

} // namespace

std::vector<ReversibleLayer> encoder_layers(const SuperNetwork& net,
                                            const PathAssignment* path,
                                            double dropout_p) {
    AttentionContext ctx;
    ctx.dropout_p = dropout_p;
    std::vector<ReversibleLayer> layers;
    for (int i = 0; i < net.dims.enc_layers; ++i) {
        int b = i % net.dims.s;
        ReversibleLayer layer;
        layer.splits = net.dims.m;
        for (int k = 0; k < net.dims.m; ++k) {
            int idx = path ? path->enc[static_cast<std::size_t>(b)]
                                 [static_cast<std::size_t>(k)]
                           : -1;
            layer.g.push_back(node_g(
                &net.enc_nodes[static_cast<std::size_t>(b)]
                              [static_cast<std::size_t>(k)],
                ctx, idx));
        }
        layers.push_back(std::move(layer));
    }
    return layers;
}

std::vector<ReversibleLayer> decoder_layers(const SuperNetwork& net,
                                            const Tensor& memory,
                                            const PathAssignment* path,
                                            double dropout_p) {
    AttentionContext ctx;
    ctx.causal = true;
    ctx.memory = memory;
    ctx.dropout_p = dropout_p;
    std::vector<ReversibleLayer> layers;
    for (int i = 0; i < net.dims.dec_layers; ++i) {
        int b = i % net.dims.s;
        ReversibleLayer layer;
        layer.splits = net.dims.n + 1;
        for (int k = 0; k < net.dims.n; ++k) {
            int idx = path ? path->dec[static_cast<std::size_t>(b)]
                                 [static_cast<std::size_t>(k)]
                           : -1;
            layer.g.push_back(node_g(
                &net.dec_nodes[static_cast<std::size_t>(b)]
                              [static_cast<std::size_t>(k)],
                ctx, idx));
        }
        layer.g.push_back(fixed_g(&net.dec_cross[static_cast<std::size_t>(b)],
                                  net.pooling, ctx));
        layers.push_back(std::move(layer));
    }
    return layers;
}

namespace {

Tensor grad_leaf(const Tensor& like) {
    return Tensor::leaf(like.shape(), like.dtype(), like.grad_or_zeros());
}

void check_example(const SequenceExample& ex) {
    if (ex.src.empty() || ex.tgt_in.empty()) fail("empty sequence in example");
    if (ex.tgt_in.size() != ex.tgt_out.size() ||
        ex.tgt_out.size() != ex.tgt_weight.size())
        fail("target-side lengths disagree in example");
}

} // namespace

double reversible_loss_and_grad(const SuperNetwork& net,
                                const SequenceExample& ex, RngStream& master,
                                double grad_scale, double label_smoothing,
                                const PathAssignment* path) {
    check_example(ex);

    Tape src_tape;
    Tensor x_src;
    {
        TapeScope scope(src_tape);
        x_src = embed_sequence(net.embed, ex.src);
    }
    StackState enc;
    enc.layers = encoder_layers(net, path, net.dropout_p);
    Tensor enc_out = forward_stack(enc, x_src.detach(true), master);

    Tensor enc_out_leaf = enc_out.detach(true);
    Tape mem_tape;
    Tensor mem;
    {
        TapeScope scope(mem_tape);
        mem = matmul(enc_out_leaf, net.mem_proj);
    }
    Tensor mem_leaf = mem.detach(true);

    Tape tgt_tape;
    Tensor y_tgt;
    {
        TapeScope scope(tgt_tape);
        y_tgt = embed_sequence(net.embed, ex.tgt_in);
    }
    StackState dec;
    dec.layers = decoder_layers(net, mem_leaf, path, net.dropout_p);
    Tensor dec_out = forward_stack(dec, y_tgt.detach(true), master);

    Tensor dec_leaf = dec_out.detach(true);
    Tape out_tape;
    double loss_value;
    {
        TapeScope scope(out_tape);
        Tensor logits = output_logits(net.embed, dec_leaf);
        Tensor loss = cross_entropy_label_smoothed(logits, ex.tgt_out,
                                                   label_smoothing,
                                                   ex.tgt_weight);
        loss_value = loss.at(0);
        out_tape.backward_from(loss,
                               Tensor::full({1}, loss.dtype(), grad_scale));
    }

    auto dec_bundle = stack_backward(dec, grad_leaf(dec_leaf));
    mem_tape.backward_from(mem, grad_leaf(mem_leaf));
    tgt_tape.backward_from(y_tgt, dec_bundle.dx);
    auto enc_bundle = stack_backward(enc, grad_leaf(enc_out_leaf));
    src_tape.backward_from(x_src, enc_bundle.dx);
    return loss_value;
}

double stored_loss_and_grad(const SuperNetwork& net, const SequenceExample& ex,
                            RngStream& master, double grad_scale,
                            double label_smoothing,
                            const PathAssignment* path) {
    check_example(ex);
    Tape tape;
    TapeScope scope(tape);
    Tensor h = embed_sequence(net.embed, ex.src);
    LayerRngLog log;
    for (const auto& layer : encoder_layers(net, path, net.dropout_p))
        h = forward_layer(layer, h, master, log);
    Tensor mem = matmul(h, net.mem_proj);
    Tensor y = embed_sequence(net.embed, ex.tgt_in);
    for (const auto& layer : decoder_layers(net, mem, path, net.dropout_p))
        y = forward_layer(layer, y, master, log);
    Tensor logits = output_logits(net.embed, y);
    Tensor loss = cross_entropy_label_smoothed(logits, ex.tgt_out,
                                               label_smoothing, ex.tgt_weight);
    tape.backward_from(loss, Tensor::full({1}, loss.dtype(), grad_scale));
    return loss.at(0);
}

namespace {

Tensor run_forward_nograd(const SuperNetwork& net, const std::vector<int>& src,
                          const std::vector<int>& tgt_in, RngStream& master,
                          const PathAssignment* path) {
    NoGradScope no_grad;
    Tensor h = embed_sequence(net.embed, src);
    LayerRngLog log;
    for (const auto& layer : encoder_layers(net, path, 0.0))
        h = forward_layer(layer, h, master, log);
    Tensor mem = matmul(h, net.mem_proj);
    Tensor y = embed_sequence(net.embed, tgt_in);
    for (const auto& layer : decoder_layers(net, mem, path, 0.0))
        y = forward_layer(layer, y, master, log);
    return output_logits(net.embed, y);
}

} // namespace

double sequence_loss(const SuperNetwork& net, const SequenceExample& ex,
                     RngStream& master, double label_smoothing,
                     const PathAssignment* path) {
    check_example(ex);
    NoGradScope no_grad;
    Tensor logits = run_forward_nograd(net, ex.src, ex.tgt_in, master, path);
    Tensor loss = cross_entropy_label_smoothed(logits, ex.tgt_out,
                                               label_smoothing, ex.tgt_weight);
    return loss.at(0);
}

Tensor decode_logits(const SuperNetwork& net, const std::vector<int>& src,
                     const std::vector<int>& tgt_prefix, RngStream& master) {
    return run_forward_nograd(net, src, tgt_prefix, master, nullptr);
}

} // namespace revdarts
