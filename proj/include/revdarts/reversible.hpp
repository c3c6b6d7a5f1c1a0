#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "revdarts/rng.hpp"
#include "revdarts/tensor.hpp"

namespace revdarts {

// Residual function of split k: receives the not-yet-updated later splits
// X_{i>k} (ascending index) and the already-updated earlier splits Y_{i<k}.
using GFunction = std::function<Tensor(const std::vector<Tensor>& later_x,
                                       const std::vector<Tensor>& earlier_y,
                                       RngStream& rng)>;

struct ReversibleLayer {
    int splits = 0;
    std::vector<GFunction> g;
};

// Per-G_k dropout seeds drawn at forward time; replaying them makes
// reconstruction bit-identical to the forward pass.
struct LayerRngLog {
    std::vector<std::uint64_t> seeds;
};

// Y_k = X_k + G_k(X_{i>k}, Y_{i<k}), computed strictly in order k = 1..n.
Tensor forward_layer(const ReversibleLayer& layer, const Tensor& x,
                     RngStream& master, LayerRngLog& log_out);
Tensor forward_layer_replay(const ReversibleLayer& layer, const Tensor& x,
                            const LayerRngLog& log);

// X_k = Y_k - G_k(X_{i>k}, Y_{i<k}), recovered in order k = n..1.
Tensor inverse_layer(const ReversibleLayer& layer, const Tensor& y,
                     const LayerRngLog& log);

struct GradientBundle {
    Tensor x;  // reconstructed layer input
    Tensor dx; // gradient of the loss w.r.t. that input
};

// Debug-mode shadow comparison; in release use no shadow exists.
struct ReconstructionGuard {
    const Tensor* shadow = nullptr;
    double threshold = 1e-3;
};

// One layer of BP-with-reconstruction: consumes the layer output and its
// upstream gradient, produces the reconstructed input and its gradient.
// Parameter gradients accumulate into the G functions' leaves as a side
// effect. Each G_k runs exactly once more than in a stored-activation
// backward; the ledger's recompute counter tracks this.
GradientBundle backward_with_reconstruction(const ReversibleLayer& layer,
                                            const Tensor& y, const Tensor& dy,
                                            const LayerRngLog& log,
                                            const ReconstructionGuard* guard =
                                                nullptr);

struct StackState {
    std::vector<ReversibleLayer> layers;
    std::vector<LayerRngLog> logs;
    Tensor stored_input;  // embedding-level input, a leaf
    Tensor stored_output; // final layer output; nothing in between is kept
    long long ledger_held = 0;
};

// Runs all layers without a tape; retains only input and final output
// (both registered with the active ledger).
Tensor forward_stack(StackState& stack, const Tensor& x, RngStream& master);

// Repeated application of the per-layer algorithm, top to bottom.
GradientBundle stack_backward(StackState& stack, const Tensor& d_out,
                              const ReconstructionGuard* guard = nullptr);

// Release the ledger bytes held for stored_input / stored_output.
void release_stack_storage(StackState& stack);

} // namespace revdarts
