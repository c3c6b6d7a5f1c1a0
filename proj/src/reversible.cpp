#include "revdarts/reversible.hpp"

#include <cmath>

#include "revdarts/ledger.hpp"
#include "revdarts/primitives.hpp"

namespace revdarts {

namespace {

void check_layer(const ReversibleLayer& layer, const Tensor& t) {
    if (layer.splits < 2)
        fail("reversible layer needs at least 2 splits, got " +
             std::to_string(layer.splits));
    if (static_cast<int>(layer.g.size()) != layer.splits)
        fail("reversible layer has " + std::to_string(layer.g.size()) +
             " G functions for " + std::to_string(layer.splits) + " splits");
    if (t.rank() != 2 || t.dim(1) % layer.splits != 0)
        fail("tensor " + shape_str(t.shape()) + " not divisible into " +
             std::to_string(layer.splits) + " splits");
}

void check_log(const ReversibleLayer& layer, const LayerRngLog& log) {
    if (log.seeds.size() != static_cast<std::size_t>(layer.splits))
        fail("rng log has " + std::to_string(log.seeds.size()) +
             " seeds for " + std::to_string(layer.splits) +
             " splits; reconstruction would not replay the forward pass");
}

Tensor eval_g(const ReversibleLayer& layer, int k,
              const std::vector<Tensor>& later_x,
              const std::vector<Tensor>& earlier_y, std::uint64_t seed,
              int expected_rows, int expected_cols, bool recompute) {
    if (MemoryLedger* ledger = current_ledger()) {
        ++ledger->g_eval_count;
        if (recompute) ++ledger->recompute_count;
    }
    RngStream rng(seed);
    Tensor out = layer.g[static_cast<std::size_t>(k)](later_x, earlier_y, rng);
    if (out.rank() != 2 || out.dim(0) != expected_rows ||
        out.dim(1) != expected_cols)
        fail("G_" + std::to_string(k + 1) + " produced " +
             shape_str(out.shape()) + ", expected [" +
             std::to_string(expected_rows) + "x" + std::to_string(expected_cols) +
             "]");
    return out;
}

Tensor run_forward(const ReversibleLayer& layer, const Tensor& x,
                   const std::vector<std::uint64_t>& seeds) {
    int n = layer.splits;
    int dn = x.dim(1) / n;
    auto xs = split_cols(x, n);
    std::vector<Tensor> ys;
    ys.reserve(static_cast<std::size_t>(n));
    for (int k = 0; k < n; ++k) {
        std::vector<Tensor> later(xs.begin() + k + 1, xs.end());
        Tensor g = eval_g(layer, k, later, ys, seeds[static_cast<std::size_t>(k)],
                          x.dim(0), dn, false);
        ys.push_back(add(xs[static_cast<std::size_t>(k)], g));
    }
    return concat_cols(ys);
}

} // namespace

Tensor forward_layer(const ReversibleLayer& layer, const Tensor& x,
                     RngStream& master, LayerRngLog& log_out) {
    check_layer(layer, x);
    log_out.seeds.clear();
    for (int k = 0; k < layer.splits; ++k) log_out.seeds.push_back(master.fork());
    return run_forward(layer, x, log_out.seeds);
}

Tensor forward_layer_replay(const ReversibleLayer& layer, const Tensor& x,
                            const LayerRngLog& log) {
    check_layer(layer, x);
    check_log(layer, log);
    return run_forward(layer, x, log.seeds);
}

Tensor inverse_layer(const ReversibleLayer& layer, const Tensor& y,
                     const LayerRngLog& log) {
    check_layer(layer, y);
    check_log(layer, log);
    int n = layer.splits;
    int dn = y.dim(1) / n;
    auto ys = split_cols(y, n);
    std::vector<Tensor> later; // ascending index among reconstructed X_{i>k}
    std::vector<Tensor> xs(static_cast<std::size_t>(n));
    for (int k = n - 1; k >= 0; --k) {
        std::vector<Tensor> earlier(ys.begin(), ys.begin() + k);
        Tensor g = eval_g(layer, k, later, earlier,
                          log.seeds[static_cast<std::size_t>(k)], y.dim(0), dn,
                          false);
        xs[static_cast<std::size_t>(k)] = sub(ys[static_cast<std::size_t>(k)], g);
        later.insert(later.begin(), xs[static_cast<std::size_t>(k)]);
    }
    return concat_cols(xs);
}

GradientBundle backward_with_reconstruction(const ReversibleLayer& layer,
                                            const Tensor& y, const Tensor& dy,
                                            const LayerRngLog& log,
                                            const ReconstructionGuard* guard) {
    check_layer(layer, y);
    check_log(layer, log);
    if (y.shape() != dy.shape())
        fail("backward_with_reconstruction: dY " + shape_str(dy.shape()) +
             " does not match Y " + shape_str(y.shape()));
    int n = layer.splits;
    int dn = y.dim(1) / n;
    int rows = y.dim(0);

    std::vector<Tensor> y_leaves, dy_parts;
    {
        NoGradScope no_grad;
        for (Tensor& part : split_cols(y, n))
            y_leaves.push_back(part.detach(true));
        dy_parts = split_cols(dy, n);
    }

    std::vector<Tensor> x_leaves(static_cast<std::size_t>(n));
    std::vector<std::vector<double>> grad_k(static_cast<std::size_t>(n));
    std::vector<Tensor> later; // reconstructed X_{i>k}, ascending

    for (int k = n - 1; k >= 0; --k) {
        auto& gk = grad_k[static_cast<std::size_t>(k)];
        gk = dy_parts[static_cast<std::size_t>(k)].values();
        if (k < n - 1) {
            auto cg = y_leaves[static_cast<std::size_t>(k)].grad_or_zeros();
            for (std::size_t i = 0; i < gk.size(); ++i) gk[i] += cg[i];
        }
        for (double v : gk)
            if (!std::isfinite(v))
                fail("non-finite gradient entering split " + std::to_string(k + 1));

        Tensor g;
        {
            Tape tape;
            TapeScope scope(tape);
            std::vector<Tensor> earlier(y_leaves.begin(), y_leaves.begin() + k);
            g = eval_g(layer, k, later, earlier,
                       log.seeds[static_cast<std::size_t>(k)], rows, dn, true);
            // a constant G (e.g. the zero op) records no history to sweep
            if (g.impl()->node >= 0 && g.impl()->tape.lock() == tape.state())
                tape.backward_from(
                    g, Tensor::leaf(g.shape(), g.dtype(), gk));
        }
        Tensor xk;
        {
            NoGradScope no_grad;
            xk = sub(y_leaves[static_cast<std::size_t>(k)], g.detach(false))
                     .detach(true);
        }
        x_leaves[static_cast<std::size_t>(k)] = xk;
        later.insert(later.begin(), xk);
    }

    Tensor x_full, dx_full;
    {
        NoGradScope no_grad;
        x_full = concat_cols(x_leaves);
        std::vector<Tensor> dx_parts;
        for (int k = 0; k < n; ++k) {
            std::vector<double> vals = grad_k[static_cast<std::size_t>(k)];
            if (k > 0) {
                auto xg = x_leaves[static_cast<std::size_t>(k)].grad_or_zeros();
                for (std::size_t i = 0; i < vals.size(); ++i) vals[i] += xg[i];
            }
            dx_parts.push_back(Tensor::leaf({rows, dn}, y.dtype(), std::move(vals)));
        }
        dx_full = concat_cols(dx_parts);
    }

    if (guard && guard->shadow) {
        double worst = 0.0;
        for (std::size_t i = 0; i < x_full.size(); ++i)
            worst = std::max(worst, std::fabs(x_full.at(i) - guard->shadow->at(i)));
        if (worst > guard->threshold)
            fail("reconstruction drift " + std::to_string(worst) +
                 " exceeds guard threshold " + std::to_string(guard->threshold));
    }
    return GradientBundle{x_full, dx_full};
}

Tensor forward_stack(StackState& stack, const Tensor& x, RngStream& master) {
    release_stack_storage(stack);
    stack.logs.assign(stack.layers.size(), LayerRngLog{});
    Tensor h = x;
    {
        NoGradScope no_grad;
        for (std::size_t i = 0; i < stack.layers.size(); ++i)
            h = forward_layer(stack.layers[i], h, master, stack.logs[i]);
    }
    stack.stored_input = x;
    stack.stored_output = h;
    long long bytes =
        static_cast<long long>(x.size() * dtype_bytes(x.dtype())) +
        static_cast<long long>(h.size() * dtype_bytes(h.dtype()));
    if (MemoryLedger* ledger = current_ledger()) {
        ledger->retain(bytes);
        stack.ledger_held = bytes;
    }
    return h;
}

GradientBundle stack_backward(StackState& stack, const Tensor& d_out,
                              const ReconstructionGuard* guard) {
    if (!stack.stored_output.defined())
        fail("stack_backward: no stored output; run forward first");
    Tensor y = stack.stored_output;
    Tensor dy = d_out;
    GradientBundle bundle;
    for (std::size_t i = stack.layers.size(); i-- > 0;) {
        bundle = backward_with_reconstruction(stack.layers[i], y, dy,
                                              stack.logs[i], guard);
        y = bundle.x;
        dy = bundle.dx;
    }
    release_stack_storage(stack);
    return bundle;
}

void release_stack_storage(StackState& stack) {
    if (stack.ledger_held > 0) {
        if (MemoryLedger* ledger = current_ledger())
            ledger->release(stack.ledger_held);
        stack.ledger_held = 0;
    }
    stack.stored_input = Tensor();
    stack.stored_output = Tensor();
}

} // namespace revdarts
