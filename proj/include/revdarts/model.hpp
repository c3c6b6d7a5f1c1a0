#pragma once

#include <vector>

#include "revdarts/reversible.hpp"
#include "revdarts/search.hpp"

namespace revdarts {

struct ModelDims {
    int vocab = 64;
    int e = 32;
    int d = 96;
    int m = 2; // encoder splits per layer
    int n = 3; // searched decoder splits; the decoder layer has n+1
    int s = 1; // block depth over which alpha is shared
    int enc_layers = 1;
    int dec_layers = 1;
    int l_max = 48;

    int enc_split_width() const { return d / m; }
    int dec_split_width() const { return d / (n + 1); }
    void validate() const;
};

// Vocabulary embedding factored through a bottleneck of width e, with the
// output projection tied to the same two matrices. Positions are learned.
struct FactorizedEmbedding {
    Tensor vocab_to_e; // [V x e]
    Tensor e_to_d;     // [e x d]
    Tensor pos;        // [l_max x d]
};

FactorizedEmbedding make_embedding(const ModelDims& dims, RngStream& rng,
                                   Dtype dtype);
Tensor embed_sequence(const FactorizedEmbedding& emb,
                      const std::vector<int>& ids);
Tensor output_logits(const FactorizedEmbedding& emb, const Tensor& h);

// The searchable network. A derived (discretized) model is the same structure
// with single-candidate nodes and frozen alpha, so one type serves both.
struct SuperNetwork {
    ModelDims dims;
    Dtype dtype = Dtype::f64;
    Pooling pooling = Pooling::avg;
    double dropout_p = 0.0;
    FactorizedEmbedding embed;
    Tensor mem_proj;                               // [d x dec_split_width]
    std::vector<std::vector<SearchNode>> enc_nodes; // s x m
    std::vector<std::vector<SearchNode>> dec_nodes; // s x n
    std::vector<OperationInstance> dec_cross;       // s fixed cross-attn slots

    std::vector<Tensor> theta_params() const;
    std::vector<Tensor> alpha_params() const;
};

SuperNetwork make_supernet(const ModelDims& dims, Pooling pooling,
                           double dropout_p, Dtype dtype, RngStream& rng);

// Per-node op indices for single-path (uniform-sampling) execution;
// empty grids mean "run the full mixture".
struct PathAssignment {
    std::vector<std::vector<int>> enc; // s x m
    std::vector<std::vector<int>> dec; // s x n
};

PathAssignment sample_uniform_path(const SuperNetwork& net, RngStream& rng);

// Reversible layers whose G closures reference the network's nodes. The
// decoder's last split is the fixed cross-attention over `memory`.
std::vector<ReversibleLayer> encoder_layers(const SuperNetwork& net,
                                            const PathAssignment* path,
                                            double dropout_p);
std::vector<ReversibleLayer> decoder_layers(const SuperNetwork& net,
                                            const Tensor& memory,
                                            const PathAssignment* path,
                                            double dropout_p);

struct SequenceExample {
    std::vector<int> src;
    std::vector<int> tgt_in;
    std::vector<int> tgt_out;
    std::vector<double> tgt_weight; // 0 on padding, 1 elsewhere
};

// Forward + backward for one sequence with the reversible backbone:
// only embedding-level tapes and the stack boundary tensors are retained;
// everything inside the stacks is reconstructed. Parameter gradients
// accumulate scaled by grad_scale. Returns the (unscaled) loss.
double reversible_loss_and_grad(const SuperNetwork& net,
                                const SequenceExample& ex, RngStream& master,
                                double grad_scale, double label_smoothing,
                                const PathAssignment* path = nullptr);

// Same computation under one persistent tape with every activation stored;
// used for retraining derived models and as the memory comparator.
double stored_loss_and_grad(const SuperNetwork& net, const SequenceExample& ex,
                            RngStream& master, double grad_scale,
                            double label_smoothing,
                            const PathAssignment* path = nullptr);

// Gradient-free loss (validation metrics).
double sequence_loss(const SuperNetwork& net, const SequenceExample& ex,
                     RngStream& master, double label_smoothing,
                     const PathAssignment* path = nullptr);

// Gradient-free decoder logits for a target prefix (greedy decoding).
Tensor decode_logits(const SuperNetwork& net, const std::vector<int>& src,
                     const std::vector<int>& tgt_prefix, RngStream& master);

} // namespace revdarts
