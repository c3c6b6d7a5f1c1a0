#pragma once

#include <cmath>
#include <functional>
#include <vector>

#include "revdarts/primitives.hpp"
#include "revdarts/rng.hpp"
#include "revdarts/tensor.hpp"

namespace revdarts::testing {

inline Tensor random_tensor(std::vector<int> shape, RngStream& rng,
                            double lo = -2.0, double hi = 2.0,
                            Dtype dtype = Dtype::f64, bool requires_grad = false) {
    std::vector<double> vals(shape_size(shape));
    for (double& v : vals) v = lo + (hi - lo) * rng.next_uniform();
    return Tensor::leaf(std::move(shape), dtype, std::move(vals), requires_grad);
}

inline double rel_err(double got, double want) {
    double denom = std::max({1.0, std::fabs(got), std::fabs(want)});
    return std::fabs(got - want) / denom;
}

inline double max_rel_err(const std::vector<double>& got,
                          const std::vector<double>& want) {
    double worst = 0.0;
    for (std::size_t i = 0; i < got.size(); ++i)
        worst = std::max(worst, rel_err(got[i], want[i]));
    return worst;
}

inline double max_abs_diff(const std::vector<double>& a,
                           const std::vector<double>& b) {
    double worst = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i)
        worst = std::max(worst, std::fabs(a[i] - b[i]));
    return worst;
}

// Tape gradient of sum(build(x)) w.r.t. x, compared against central
// differences of the same scalar map.
inline double gradcheck_vs_fd(const std::function<Tensor(const Tensor&)>& build,
                              const Tensor& x, double h = 1e-5) {
    Tensor leaf = x.detach(true);
    Tape tape;
    {
        TapeScope scope(tape);
        Tensor y = build(leaf);
        Tensor loss = sum_all(y);
        tape.backward_from(loss, Tensor::full({1}, loss.dtype(), 1.0));
    }
    Tensor fd = finite_diff_gradient(
        [&](const Tensor& xx) {
            Tensor y = build(xx);
            double s = 0.0;
            for (std::size_t i = 0; i < y.size(); ++i) s += y.at(i);
            return s;
        },
        x, h);
    return max_rel_err(leaf.grad_or_zeros(), fd.values());
}

} // namespace revdarts::testing
