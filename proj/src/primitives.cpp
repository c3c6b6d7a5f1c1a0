#include "revdarts/primitives.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "revdarts/rng.hpp"

namespace revdarts {

namespace {

void check_rank2(const char* op, const Tensor& t) {
    if (t.rank() != 2)
        fail(std::string(op) + ": expected rank-2 tensor, got " + shape_str(t.shape()));
}

void check_same_shape(const char* op, const Tensor& a, const Tensor& b) {
    if (a.shape() != b.shape())
        fail(std::string(op) + ": shape mismatch " + shape_str(a.shape()) +
             " vs " + shape_str(b.shape()));
}

void check_same_dtype(const char* op, const Tensor& a, const Tensor& b) {
    if (a.dtype() != b.dtype())
        fail(std::string(op) + ": dtype mismatch " +
             std::string(dtype_name(a.dtype())) + " vs " + dtype_name(b.dtype()));
}

} // namespace

Tensor add(const Tensor& a, const Tensor& b) {
    check_same_shape("add", a, b);
    check_same_dtype("add", a, b);
    std::vector<double> out(a.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.at(i) + b.at(i);
    return finish_op(a.shape(), a.dtype(), std::move(out), {a, b},
                     [](const std::vector<Tensor>&, const Tensor&,
                        const std::vector<double>& up, GradSink& sink) {
                         auto ga = sink.slot(0);
                         auto gb = sink.slot(1);
                         for (std::size_t i = 0; i < up.size(); ++i) {
                             ga[i] += up[i];
                             gb[i] += up[i];
                         }
                     });
}

Tensor sub(const Tensor& a, const Tensor& b) {
    check_same_shape("sub", a, b);
    check_same_dtype("sub", a, b);
    std::vector<double> out(a.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.at(i) - b.at(i);
    return finish_op(a.shape(), a.dtype(), std::move(out), {a, b},
                     [](const std::vector<Tensor>&, const Tensor&,
                        const std::vector<double>& up, GradSink& sink) {
                         auto ga = sink.slot(0);
                         auto gb = sink.slot(1);
                         for (std::size_t i = 0; i < up.size(); ++i) {
                             ga[i] += up[i];
                             gb[i] -= up[i];
                         }
                     });
}

Tensor mul(const Tensor& a, const Tensor& b) {
    check_same_shape("mul", a, b);
    check_same_dtype("mul", a, b);
    std::vector<double> out(a.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.at(i) * b.at(i);
    return finish_op(a.shape(), a.dtype(), std::move(out), {a, b},
                     [](const std::vector<Tensor>& in, const Tensor&,
                        const std::vector<double>& up, GradSink& sink) {
                         auto ga = sink.slot(0);
                         auto gb = sink.slot(1);
                         for (std::size_t i = 0; i < up.size(); ++i) {
                             ga[i] += up[i] * in[1].at(i);
                             gb[i] += up[i] * in[0].at(i);
                         }
                     });
}

Tensor scale(const Tensor& a, double c) {
    std::vector<double> out(a.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.at(i) * c;
    return finish_op(a.shape(), a.dtype(), std::move(out), {a},
                     [c](const std::vector<Tensor>&, const Tensor&,
                         const std::vector<double>& up, GradSink& sink) {
                         auto ga = sink.slot(0);
                         for (std::size_t i = 0; i < up.size(); ++i)
                             ga[i] += up[i] * c;
                     });
}

Tensor relu(const Tensor& a) {
    std::vector<double> out(a.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.at(i) > 0 ? a.at(i) : 0.0;
    return finish_op(a.shape(), a.dtype(), std::move(out), {a},
                     [](const std::vector<Tensor>& in, const Tensor&,
                        const std::vector<double>& up, GradSink& sink) {
                         auto ga = sink.slot(0);
                         for (std::size_t i = 0; i < up.size(); ++i)
                             if (in[0].at(i) > 0) ga[i] += up[i];
                     });
}

Tensor sigmoid(const Tensor& a) {
    std::vector<double> out(a.size());
    for (std::size_t i = 0; i < out.size(); ++i)
        out[i] = 1.0 / (1.0 + std::exp(-a.at(i)));
    return finish_op(a.shape(), a.dtype(), std::move(out), {a},
                     [](const std::vector<Tensor>&, const Tensor& out,
                        const std::vector<double>& up, GradSink& sink) {
                         auto ga = sink.slot(0);
                         for (std::size_t i = 0; i < up.size(); ++i) {
                             double s = out.at(i);
                             ga[i] += up[i] * s * (1.0 - s);
                         }
                     });
}

Tensor matmul(const Tensor& a, const Tensor& b) {
    check_rank2("matmul", a);
    check_rank2("matmul", b);
    check_same_dtype("matmul", a, b);
    int m = a.dim(0), k = a.dim(1), k2 = b.dim(0), n = b.dim(1);
    if (k != k2)
        fail("matmul: inner dimensions disagree, " + shape_str(a.shape()) +
             " vs " + shape_str(b.shape()));
    std::vector<double> out(static_cast<std::size_t>(m) * n, 0.0);
    const auto& av = a.values();
    const auto& bv = b.values();
    for (int i = 0; i < m; ++i)
        for (int p = 0; p < k; ++p) {
            double aip = av[static_cast<std::size_t>(i) * k + p];
            if (aip == 0.0) continue;
            const double* brow = &bv[static_cast<std::size_t>(p) * n];
            double* orow = &out[static_cast<std::size_t>(i) * n];
            for (int j = 0; j < n; ++j) orow[j] += aip * brow[j];
        }
    return finish_op({m, n}, a.dtype(), std::move(out), {a, b},
                     [m, k, n](const std::vector<Tensor>& in, const Tensor&,
                               const std::vector<double>& up, GradSink& sink) {
                         const auto& av = in[0].values();
                         const auto& bv = in[1].values();
                         {
                             auto ga = sink.slot(0); // up . b^T
                             for (int i = 0; i < m; ++i)
                                 for (int j = 0; j < n; ++j) {
                                     double u = up[static_cast<std::size_t>(i) * n + j];
                                     if (u == 0.0) continue;
                                     for (int p = 0; p < k; ++p)
                                         ga[static_cast<std::size_t>(i) * k + p] +=
                                             u * bv[static_cast<std::size_t>(p) * n + j];
                                 }
                         }
                         {
                             auto gb = sink.slot(1); // a^T . up
                             for (int i = 0; i < m; ++i)
                                 for (int p = 0; p < k; ++p) {
                                     double aip = av[static_cast<std::size_t>(i) * k + p];
                                     if (aip == 0.0) continue;
                                     for (int j = 0; j < n; ++j)
                                         gb[static_cast<std::size_t>(p) * n + j] +=
                                             aip * up[static_cast<std::size_t>(i) * n + j];
                                 }
                         }
                     });
}

Tensor transpose(const Tensor& a) {
    check_rank2("transpose", a);
    int m = a.dim(0), n = a.dim(1);
    std::vector<double> out(a.size());
    for (int i = 0; i < m; ++i)
        for (int j = 0; j < n; ++j)
            out[static_cast<std::size_t>(j) * m + i] = a.at(static_cast<std::size_t>(i) * n + j);
    return finish_op({n, m}, a.dtype(), std::move(out), {a},
                     [m, n](const std::vector<Tensor>&, const Tensor&,
                            const std::vector<double>& up, GradSink& sink) {
                         auto ga = sink.slot(0);
                         for (int i = 0; i < m; ++i)
                             for (int j = 0; j < n; ++j)
                                 ga[static_cast<std::size_t>(i) * n + j] +=
                                     up[static_cast<std::size_t>(j) * m + i];
                     });
}

Tensor add_bias(const Tensor& a, const Tensor& bias) {
    check_rank2("add_bias", a);
    check_same_dtype("add_bias", a, bias);
    if (bias.rank() != 1 || bias.dim(0) != a.dim(1))
        fail("add_bias: bias shape " + shape_str(bias.shape()) +
             " incompatible with " + shape_str(a.shape()));
    int m = a.dim(0), n = a.dim(1);
    std::vector<double> out(a.size());
    for (int i = 0; i < m; ++i)
        for (int j = 0; j < n; ++j)
            out[static_cast<std::size_t>(i) * n + j] =
                a.at(static_cast<std::size_t>(i) * n + j) + bias.at(j);
    return finish_op(a.shape(), a.dtype(), std::move(out), {a, bias},
                     [m, n](const std::vector<Tensor>&, const Tensor&,
                            const std::vector<double>& up, GradSink& sink) {
                         auto ga = sink.slot(0);
                         for (std::size_t i = 0; i < up.size(); ++i) ga[i] += up[i];
                         auto gb = sink.slot(1);
                         for (int i = 0; i < m; ++i)
                             for (int j = 0; j < n; ++j)
                                 gb[j] += up[static_cast<std::size_t>(i) * n + j];
                     });
}

Tensor slice_cols(const Tensor& a, int start, int width) {
    check_rank2("slice_cols", a);
    int m = a.dim(0), n = a.dim(1);
    if (start < 0 || width <= 0 || start + width > n)
        fail("slice_cols: slice [" + std::to_string(start) + "," +
             std::to_string(start + width) + ") out of range for " +
             shape_str(a.shape()));
    std::vector<double> out(static_cast<std::size_t>(m) * width);
    for (int i = 0; i < m; ++i)
        for (int j = 0; j < width; ++j)
            out[static_cast<std::size_t>(i) * width + j] =
                a.at(static_cast<std::size_t>(i) * n + start + j);
    return finish_op({m, width}, a.dtype(), std::move(out), {a},
                     [m, n, start, width](const std::vector<Tensor>&, const Tensor&,
                                          const std::vector<double>& up, GradSink& sink) {
                         auto ga = sink.slot(0);
                         for (int i = 0; i < m; ++i)
                             for (int j = 0; j < width; ++j)
                                 ga[static_cast<std::size_t>(i) * n + start + j] +=
                                     up[static_cast<std::size_t>(i) * width + j];
                     });
}

Tensor concat_cols(const std::vector<Tensor>& parts) {
    if (parts.empty()) fail("concat_cols: no inputs");
    int m = parts[0].dim(0);
    int total = 0;
    for (const Tensor& p : parts) {
        check_rank2("concat_cols", p);
        check_same_dtype("concat_cols", parts[0], p);
        if (p.dim(0) != m)
            fail("concat_cols: row mismatch " + shape_str(parts[0].shape()) +
                 " vs " + shape_str(p.shape()));
        total += p.dim(1);
    }
    std::vector<double> out(static_cast<std::size_t>(m) * total);
    int off = 0;
    for (const Tensor& p : parts) {
        int w = p.dim(1);
        for (int i = 0; i < m; ++i)
            for (int j = 0; j < w; ++j)
                out[static_cast<std::size_t>(i) * total + off + j] =
                    p.at(static_cast<std::size_t>(i) * w + j);
        off += w;
    }
    return finish_op({m, total}, parts[0].dtype(), std::move(out), parts,
                     [m, total](const std::vector<Tensor>& in, const Tensor&,
                                const std::vector<double>& up, GradSink& sink) {
                         int off = 0;
                         for (std::size_t p = 0; p < in.size(); ++p) {
                             int w = in[p].dim(1);
                             auto g = sink.slot(p);
                             for (int i = 0; i < m; ++i)
                                 for (int j = 0; j < w; ++j)
                                     g[static_cast<std::size_t>(i) * w + j] +=
                                         up[static_cast<std::size_t>(i) * total + off + j];
                             off += w;
                         }
                     });
}

std::vector<Tensor> split_cols(const Tensor& a, int parts) {
    check_rank2("split_cols", a);
    if (parts <= 0 || a.dim(1) % parts != 0)
        fail("split_cols: " + std::to_string(parts) + " parts do not divide " +
             shape_str(a.shape()));
    int w = a.dim(1) / parts;
    std::vector<Tensor> out;
    out.reserve(static_cast<std::size_t>(parts));
    for (int p = 0; p < parts; ++p) out.push_back(slice_cols(a, p * w, w));
    return out;
}

Tensor sum_all(const Tensor& a) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a.at(i);
    return finish_op({1}, a.dtype(), {s}, {a},
                     [](const std::vector<Tensor>&, const Tensor&,
                        const std::vector<double>& up, GradSink& sink) {
                         auto ga = sink.slot(0);
                         for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += up[0];
                     });
}

Tensor reduce_mean(const Tensor& a, int axis) {
    check_rank2("reduce_mean", a);
    if (axis != 0 && axis != 1) fail("reduce_mean: axis must be 0 or 1");
    int m = a.dim(0), n = a.dim(1);
    int keep = axis == 0 ? n : m;
    int red = axis == 0 ? m : n;
    std::vector<double> out(static_cast<std::size_t>(keep), 0.0);
    for (int i = 0; i < m; ++i)
        for (int j = 0; j < n; ++j)
            out[static_cast<std::size_t>(axis == 0 ? j : i)] +=
                a.at(static_cast<std::size_t>(i) * n + j);
    for (double& v : out) v /= red;
    std::vector<int> oshape = axis == 0 ? std::vector<int>{1, n} : std::vector<int>{m, 1};
    return finish_op(oshape, a.dtype(), std::move(out), {a},
                     [m, n, axis, red](const std::vector<Tensor>&, const Tensor&,
                                       const std::vector<double>& up, GradSink& sink) {
                         auto ga = sink.slot(0);
                         for (int i = 0; i < m; ++i)
                             for (int j = 0; j < n; ++j)
                                 ga[static_cast<std::size_t>(i) * n + j] +=
                                     up[static_cast<std::size_t>(axis == 0 ? j : i)] / red;
                     });
}

Tensor reduce_max(const Tensor& a, int axis) {
    check_rank2("reduce_max", a);
    if (axis != 0 && axis != 1) fail("reduce_max: axis must be 0 or 1");
    int m = a.dim(0), n = a.dim(1);
    int keep = axis == 0 ? n : m;
    std::vector<double> out(static_cast<std::size_t>(keep),
                            -std::numeric_limits<double>::infinity());
    std::vector<int> arg(static_cast<std::size_t>(keep), 0);
    for (int i = 0; i < m; ++i)
        for (int j = 0; j < n; ++j) {
            std::size_t o = static_cast<std::size_t>(axis == 0 ? j : i);
            double v = a.at(static_cast<std::size_t>(i) * n + j);
            if (v > out[o]) {
                out[o] = v;
                arg[o] = axis == 0 ? i : j;
            }
        }
    std::vector<int> oshape = axis == 0 ? std::vector<int>{1, n} : std::vector<int>{m, 1};
    return finish_op(oshape, a.dtype(), std::move(out), {a},
                     [m, n, axis, arg](const std::vector<Tensor>&, const Tensor&,
                                       const std::vector<double>& up, GradSink& sink) {
                         auto ga = sink.slot(0);
                         int keep = axis == 0 ? n : m;
                         for (int o = 0; o < keep; ++o) {
                             int i = axis == 0 ? arg[static_cast<std::size_t>(o)] : o;
                             int j = axis == 0 ? o : arg[static_cast<std::size_t>(o)];
                             ga[static_cast<std::size_t>(i) * n + j] +=
                                 up[static_cast<std::size_t>(o)];
                         }
                     });
}

Tensor mean_stack(const std::vector<Tensor>& parts) {
    if (parts.empty()) fail("mean_stack: no inputs");
    for (const Tensor& p : parts) check_same_shape("mean_stack", parts[0], p);
    std::size_t n = parts[0].size();
    std::vector<double> out(n, 0.0);
    for (const Tensor& p : parts)
        for (std::size_t i = 0; i < n; ++i) out[i] += p.at(i);
    double inv = 1.0 / static_cast<double>(parts.size());
    for (double& v : out) v *= inv;
    return finish_op(parts[0].shape(), parts[0].dtype(), std::move(out), parts,
                     [inv](const std::vector<Tensor>& in, const Tensor&,
                           const std::vector<double>& up, GradSink& sink) {
                         for (std::size_t p = 0; p < in.size(); ++p) {
                             auto g = sink.slot(p);
                             for (std::size_t i = 0; i < up.size(); ++i)
                                 g[i] += up[i] * inv;
                         }
                     });
}

Tensor max_stack(const std::vector<Tensor>& parts) {
    if (parts.empty()) fail("max_stack: no inputs");
    for (const Tensor& p : parts) check_same_shape("max_stack", parts[0], p);
    std::size_t n = parts[0].size();
    std::vector<double> out(n);
    std::vector<int> arg(n, 0);
    for (std::size_t i = 0; i < n; ++i) {
        double best = parts[0].at(i);
        int bestp = 0;
        for (std::size_t p = 1; p < parts.size(); ++p)
            if (parts[p].at(i) > best) {
                best = parts[p].at(i);
                bestp = static_cast<int>(p);
            }
        out[i] = best;
        arg[i] = bestp;
    }
    return finish_op(parts[0].shape(), parts[0].dtype(), std::move(out), parts,
                     [arg](const std::vector<Tensor>& in, const Tensor&,
                           const std::vector<double>& up, GradSink& sink) {
                         for (std::size_t p = 0; p < in.size(); ++p) {
                             auto g = sink.slot(p);
                             for (std::size_t i = 0; i < up.size(); ++i)
                                 if (arg[i] == static_cast<int>(p)) g[i] += up[i];
                         }
                     });
}

Tensor weighted_sum(const std::vector<Tensor>& parts, const Tensor& weights) {
    if (parts.empty()) fail("weighted_sum: no inputs");
    if (weights.size() != parts.size())
        fail("weighted_sum: " + std::to_string(parts.size()) + " parts vs " +
             std::to_string(weights.size()) + " weights");
    for (const Tensor& p : parts) check_same_shape("weighted_sum", parts[0], p);
    std::size_t n = parts[0].size();
    std::vector<double> out(n, 0.0);
    for (std::size_t p = 0; p < parts.size(); ++p) {
        double w = weights.at(p);
        for (std::size_t i = 0; i < n; ++i) out[i] += w * parts[p].at(i);
    }
    std::vector<Tensor> inputs = parts;
    inputs.push_back(weights);
    std::size_t nparts = parts.size();
    return finish_op(parts[0].shape(), parts[0].dtype(), std::move(out),
                     std::move(inputs),
                     [nparts](const std::vector<Tensor>& in, const Tensor&,
                              const std::vector<double>& up, GradSink& sink) {
                         const Tensor& w = in[nparts];
                         for (std::size_t p = 0; p < nparts; ++p) {
                             auto g = sink.slot(p);
                             double wp = w.at(p);
                             for (std::size_t i = 0; i < up.size(); ++i)
                                 g[i] += up[i] * wp;
                         }
                         auto gw = sink.slot(nparts);
                         for (std::size_t p = 0; p < nparts; ++p) {
                             double dot = 0.0;
                             for (std::size_t i = 0; i < up.size(); ++i)
                                 dot += up[i] * in[p].at(i);
                             gw[p] += dot;
                         }
                     });
}

namespace {

Tensor softmax_rows_impl(const Tensor& a, const std::vector<double>* mask) {
    check_rank2("softmax", a);
    int m = a.dim(0), n = a.dim(1);
    if (mask && mask->size() != a.size())
        fail("softmax: mask size does not match logits " + shape_str(a.shape()));
    std::vector<double> out(a.size());
    for (int i = 0; i < m; ++i) {
        double mx = -std::numeric_limits<double>::infinity();
        for (int j = 0; j < n; ++j) {
            std::size_t idx = static_cast<std::size_t>(i) * n + j;
            double v = a.at(idx) + (mask ? (*mask)[idx] : 0.0);
            out[idx] = v;
            if (v > mx) mx = v;
        }
        double denom = 0.0;
        for (int j = 0; j < n; ++j) {
            std::size_t idx = static_cast<std::size_t>(i) * n + j;
            out[idx] = std::exp(out[idx] - mx);
            denom += out[idx];
        }
        for (int j = 0; j < n; ++j) out[static_cast<std::size_t>(i) * n + j] /= denom;
    }
    return finish_op(a.shape(), a.dtype(), std::move(out), {a},
                     [m, n](const std::vector<Tensor>&, const Tensor& out,
                            const std::vector<double>& up, GradSink& sink) {
                         auto ga = sink.slot(0);
                         for (int i = 0; i < m; ++i) {
                             double dot = 0.0;
                             for (int j = 0; j < n; ++j) {
                                 std::size_t idx = static_cast<std::size_t>(i) * n + j;
                                 dot += up[idx] * out.at(idx);
                             }
                             for (int j = 0; j < n; ++j) {
                                 std::size_t idx = static_cast<std::size_t>(i) * n + j;
                                 ga[idx] += out.at(idx) * (up[idx] - dot);
                             }
                         }
                     });
}

} // namespace

Tensor softmax_rows(const Tensor& a) { return softmax_rows_impl(a, nullptr); }

Tensor softmax_rows_masked(const Tensor& a, const std::vector<double>& mask) {
    return softmax_rows_impl(a, &mask);
}

Tensor softmax_blocks(const Tensor& a, int block) {
    check_rank2("softmax_blocks", a);
    int m = a.dim(0), n = a.dim(1);
    if (block <= 0 || n % block != 0)
        fail("softmax_blocks: block " + std::to_string(block) +
             " does not divide columns of " + shape_str(a.shape()));
    std::vector<double> out(a.size());
    int nblocks = n / block;
    for (int i = 0; i < m; ++i)
        for (int b = 0; b < nblocks; ++b) {
            std::size_t base = static_cast<std::size_t>(i) * n +
                               static_cast<std::size_t>(b) * block;
            double mx = -std::numeric_limits<double>::infinity();
            for (int j = 0; j < block; ++j) mx = std::max(mx, a.at(base + j));
            double denom = 0.0;
            for (int j = 0; j < block; ++j) {
                out[base + j] = std::exp(a.at(base + j) - mx);
                denom += out[base + j];
            }
            for (int j = 0; j < block; ++j) out[base + j] /= denom;
        }
    return finish_op(a.shape(), a.dtype(), std::move(out), {a},
                     [m, n, block](const std::vector<Tensor>&, const Tensor& out,
                                   const std::vector<double>& up, GradSink& sink) {
                         auto ga = sink.slot(0);
                         int nblocks = n / block;
                         for (int i = 0; i < m; ++i)
                             for (int b = 0; b < nblocks; ++b) {
                                 std::size_t base = static_cast<std::size_t>(i) * n +
                                                    static_cast<std::size_t>(b) * block;
                                 double dot = 0.0;
                                 for (int j = 0; j < block; ++j)
                                     dot += up[base + j] * out.at(base + j);
                                 for (int j = 0; j < block; ++j)
                                     ga[base + j] += out.at(base + j) * (up[base + j] - dot);
                             }
                     });
}

Tensor layer_norm(const Tensor& a, const Tensor& gain, const Tensor& bias,
                  double eps) {
    check_rank2("layer_norm", a);
    int m = a.dim(0), n = a.dim(1);
    if (gain.rank() != 1 || gain.dim(0) != n || bias.rank() != 1 || bias.dim(0) != n)
        fail("layer_norm: gain/bias shapes " + shape_str(gain.shape()) + "/" +
             shape_str(bias.shape()) + " incompatible with " + shape_str(a.shape()));
    std::vector<double> out(a.size());
    std::vector<double> mu(static_cast<std::size_t>(m)), istd(static_cast<std::size_t>(m));
    for (int i = 0; i < m; ++i) {
        double s = 0.0;
        for (int j = 0; j < n; ++j) s += a.at(static_cast<std::size_t>(i) * n + j);
        double mean = s / n;
        double var = 0.0;
        for (int j = 0; j < n; ++j) {
            double d = a.at(static_cast<std::size_t>(i) * n + j) - mean;
            var += d * d;
        }
        var /= n;
        mu[static_cast<std::size_t>(i)] = mean;
        istd[static_cast<std::size_t>(i)] = 1.0 / std::sqrt(var + eps);
        for (int j = 0; j < n; ++j) {
            std::size_t idx = static_cast<std::size_t>(i) * n + j;
            out[idx] = (a.at(idx) - mean) * istd[static_cast<std::size_t>(i)] * gain.at(j) +
                       bias.at(j);
        }
    }
    return finish_op(
        a.shape(), a.dtype(), std::move(out), {a, gain, bias},
        [m, n, mu, istd](const std::vector<Tensor>& in, const Tensor&,
                         const std::vector<double>& up, GradSink& sink) {
            const Tensor& x = in[0];
            const Tensor& g = in[1];
            auto gx = sink.slot(0);
            auto gg = sink.slot(1);
            auto gb = sink.slot(2);
            for (int i = 0; i < m; ++i) {
                double is = istd[static_cast<std::size_t>(i)];
                double mean = mu[static_cast<std::size_t>(i)];
                double sum_dxhat = 0.0, sum_dxhat_xhat = 0.0;
                for (int j = 0; j < n; ++j) {
                    std::size_t idx = static_cast<std::size_t>(i) * n + j;
                    double xhat = (x.at(idx) - mean) * is;
                    double dxhat = up[idx] * g.at(j);
                    sum_dxhat += dxhat;
                    sum_dxhat_xhat += dxhat * xhat;
                    gg[j] += up[idx] * xhat;
                    gb[j] += up[idx];
                }
                for (int j = 0; j < n; ++j) {
                    std::size_t idx = static_cast<std::size_t>(i) * n + j;
                    double xhat = (x.at(idx) - mean) * is;
                    double dxhat = up[idx] * g.at(j);
                    gx[idx] += is * (dxhat - sum_dxhat / n - xhat * sum_dxhat_xhat / n);
                }
            }
        });
}

Tensor embedding_rows(const Tensor& table, const std::vector<int>& ids) {
    check_rank2("embedding", table);
    int v = table.dim(0), e = table.dim(1);
    for (int id : ids)
        if (id < 0 || id >= v)
            fail("embedding: id " + std::to_string(id) + " out of range [0," +
                 std::to_string(v) + ")");
    std::vector<double> out(ids.size() * static_cast<std::size_t>(e));
    for (std::size_t i = 0; i < ids.size(); ++i)
        for (int j = 0; j < e; ++j)
            out[i * e + j] = table.at(static_cast<std::size_t>(ids[i]) * e + j);
    return finish_op({static_cast<int>(ids.size()), e}, table.dtype(), std::move(out),
                     {table},
                     [ids, e](const std::vector<Tensor>&, const Tensor&,
                              const std::vector<double>& up, GradSink& sink) {
                         auto gt = sink.slot(0);
                         for (std::size_t i = 0; i < ids.size(); ++i)
                             for (int j = 0; j < e; ++j)
                                 gt[static_cast<std::size_t>(ids[i]) * e + j] +=
                                     up[i * e + j];
                     });
}

namespace {

// tap j of a width-w kernel reads input position t + offset(j)
inline int tap_offset(int j, int w, ConvPadding pad) {
    return pad == ConvPadding::causal ? j - (w - 1) : j - (w - 1) / 2;
}

} // namespace

Tensor conv1d_depthwise(const Tensor& x, const Tensor& kernel, ConvPadding pad) {
    check_rank2("conv1d", x);
    check_rank2("conv1d", kernel);
    check_same_dtype("conv1d", x, kernel);
    int l = x.dim(0), c = x.dim(1), w = kernel.dim(0);
    if (kernel.dim(1) != c)
        fail("conv1d: kernel channels " + std::to_string(kernel.dim(1)) +
             " do not match input channels " + std::to_string(c));
    if (w % 2 == 0) fail("conv1d: kernel size " + std::to_string(w) + " must be odd");
    std::vector<double> out(x.size(), 0.0);
    for (int t = 0; t < l; ++t)
        for (int j = 0; j < w; ++j) {
            int s = t + tap_offset(j, w, pad);
            if (s < 0 || s >= l) continue;
            for (int ch = 0; ch < c; ++ch)
                out[static_cast<std::size_t>(t) * c + ch] +=
                    kernel.at(static_cast<std::size_t>(j) * c + ch) *
                    x.at(static_cast<std::size_t>(s) * c + ch);
        }
    return finish_op(x.shape(), x.dtype(), std::move(out), {x, kernel},
                     [l, c, w, pad](const std::vector<Tensor>& in, const Tensor&,
                                    const std::vector<double>& up, GradSink& sink) {
                         const Tensor& x = in[0];
                         const Tensor& k = in[1];
                         auto gx = sink.slot(0);
                         auto gk = sink.slot(1);
                         for (int t = 0; t < l; ++t)
                             for (int j = 0; j < w; ++j) {
                                 int s = t + tap_offset(j, w, pad);
                                 if (s < 0 || s >= l) continue;
                                 for (int ch = 0; ch < c; ++ch) {
                                     double u = up[static_cast<std::size_t>(t) * c + ch];
                                     gx[static_cast<std::size_t>(s) * c + ch] +=
                                         u * k.at(static_cast<std::size_t>(j) * c + ch);
                                     gk[static_cast<std::size_t>(j) * c + ch] +=
                                         u * x.at(static_cast<std::size_t>(s) * c + ch);
                                 }
                             }
                     });
}

Tensor dynamic_conv_apply(const Tensor& x, const Tensor& weights, int groups,
                          int taps, ConvPadding pad) {
    check_rank2("dynamic_conv", x);
    check_rank2("dynamic_conv", weights);
    check_same_dtype("dynamic_conv", x, weights);
    int l = x.dim(0), c = x.dim(1);
    if (taps % 2 == 0)
        fail("dynamic_conv: kernel size " + std::to_string(taps) + " must be odd");
    if (groups <= 0 || c % groups != 0)
        fail("dynamic_conv: " + std::to_string(groups) +
             " groups do not divide " + std::to_string(c) + " channels");
    if (weights.dim(0) != l || weights.dim(1) != groups * taps)
        fail("dynamic_conv: weights " + shape_str(weights.shape()) +
             " incompatible with l=" + std::to_string(l) + " groups*taps=" +
             std::to_string(groups * taps));
    int per_group = c / groups;
    std::vector<double> out(x.size(), 0.0);
    for (int t = 0; t < l; ++t)
        for (int j = 0; j < taps; ++j) {
            int s = t + tap_offset(j, taps, pad);
            if (s < 0 || s >= l) continue;
            for (int ch = 0; ch < c; ++ch) {
                int g = ch / per_group;
                out[static_cast<std::size_t>(t) * c + ch] +=
                    weights.at(static_cast<std::size_t>(t) * groups * taps + g * taps + j) *
                    x.at(static_cast<std::size_t>(s) * c + ch);
            }
        }
    return finish_op(
        x.shape(), x.dtype(), std::move(out), {x, weights},
        [l, c, groups, taps, per_group, pad](const std::vector<Tensor>& in,
                                             const Tensor&,
                                             const std::vector<double>& up,
                                             GradSink& sink) {
            const Tensor& x = in[0];
            const Tensor& wt = in[1];
            auto gx = sink.slot(0);
            auto gw = sink.slot(1);
            for (int t = 0; t < l; ++t)
                for (int j = 0; j < taps; ++j) {
                    int s = t + tap_offset(j, taps, pad);
                    if (s < 0 || s >= l) continue;
                    for (int ch = 0; ch < c; ++ch) {
                        int g = ch / per_group;
                        std::size_t widx =
                            static_cast<std::size_t>(t) * groups * taps + g * taps + j;
                        double u = up[static_cast<std::size_t>(t) * c + ch];
                        gx[static_cast<std::size_t>(s) * c + ch] += u * wt.at(widx);
                        gw[widx] += u * x.at(static_cast<std::size_t>(s) * c + ch);
                    }
                }
        });
}

Tensor dropout(const Tensor& x, double p, std::uint64_t seed,
               std::uint64_t position) {
    if (p < 0.0 || p >= 1.0)
        fail("dropout: probability " + std::to_string(p) + " outside [0,1)");
    if (p == 0.0) return x;
    std::vector<double> out(x.size());
    RngStream rng(seed, position);
    double keep_scale = 1.0 / (1.0 - p);
    for (std::size_t i = 0; i < out.size(); ++i)
        out[i] = rng.next_uniform() >= p ? x.at(i) * keep_scale : 0.0;
    return finish_op(x.shape(), x.dtype(), std::move(out), {x},
                     [p, seed, position](const std::vector<Tensor>&, const Tensor&,
                                         const std::vector<double>& up, GradSink& sink) {
                         auto gx = sink.slot(0);
                         RngStream rng(seed, position);
                         double keep_scale = 1.0 / (1.0 - p);
                         for (std::size_t i = 0; i < up.size(); ++i) {
                             bool keep = rng.next_uniform() >= p;
                             if (keep) gx[i] += up[i] * keep_scale;
                         }
                     });
}

Tensor cross_entropy_label_smoothed(const Tensor& logits,
                                    const std::vector<int>& targets,
                                    double smoothing,
                                    const std::vector<double>& weights) {
    check_rank2("cross_entropy", logits);
    int n = logits.dim(0), v = logits.dim(1);
    if (targets.size() != static_cast<std::size_t>(n) ||
        weights.size() != static_cast<std::size_t>(n))
        fail("cross_entropy: " + std::to_string(n) + " rows vs " +
             std::to_string(targets.size()) + " targets / " +
             std::to_string(weights.size()) + " weights");
    double wsum = 0.0;
    for (double w : weights) wsum += w;
    if (wsum <= 0.0) fail("cross_entropy: all positions masked out");
    for (int t : targets)
        if (t < 0 || t >= v) fail("cross_entropy: target " + std::to_string(t) +
                                  " out of range [0," + std::to_string(v) + ")");

    // q = (1-eps) one-hot + eps/V uniform; loss_t = lse - sum_v q_v x_v
    double total = 0.0;
    std::vector<double> lse(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
        if (weights[static_cast<std::size_t>(i)] == 0.0) continue;
        double mx = -std::numeric_limits<double>::infinity();
        for (int j = 0; j < v; ++j)
            mx = std::max(mx, logits.at(static_cast<std::size_t>(i) * v + j));
        double denom = 0.0, qdotx = 0.0;
        for (int j = 0; j < v; ++j) {
            double xj = logits.at(static_cast<std::size_t>(i) * v + j);
            denom += std::exp(xj - mx);
            double q = smoothing / v + (j == targets[static_cast<std::size_t>(i)]
                                            ? 1.0 - smoothing
                                            : 0.0);
            qdotx += q * xj;
        }
        lse[static_cast<std::size_t>(i)] = mx + std::log(denom);
        total += weights[static_cast<std::size_t>(i)] *
                 (lse[static_cast<std::size_t>(i)] - qdotx);
    }
    total /= wsum;
    if (!std::isfinite(total)) fail("cross_entropy: non-finite loss");
    return finish_op(
        {1}, logits.dtype(), {total}, {logits},
        [n, v, targets, smoothing, weights, wsum](const std::vector<Tensor>& in,
                                                  const Tensor&,
                                                  const std::vector<double>& up,
                                                  GradSink& sink) {
            const Tensor& x = in[0];
            auto gx = sink.slot(0);
            for (int i = 0; i < n; ++i) {
                double w = weights[static_cast<std::size_t>(i)];
                if (w == 0.0) continue;
                double mx = -std::numeric_limits<double>::infinity();
                for (int j = 0; j < v; ++j)
                    mx = std::max(mx, x.at(static_cast<std::size_t>(i) * v + j));
                double denom = 0.0;
                for (int j = 0; j < v; ++j)
                    denom += std::exp(x.at(static_cast<std::size_t>(i) * v + j) - mx);
                for (int j = 0; j < v; ++j) {
                    double p = std::exp(x.at(static_cast<std::size_t>(i) * v + j) - mx) / denom;
                    double q = smoothing / v + (j == targets[static_cast<std::size_t>(i)]
                                                    ? 1.0 - smoothing
                                                    : 0.0);
                    gx[static_cast<std::size_t>(i) * v + j] +=
                        up[0] * w * (p - q) / wsum;
                }
            }
        });
}

Tensor finite_diff_gradient(const std::function<double(const Tensor&)>& f,
                            const Tensor& x, double h) {
    if (h <= 0.0) fail("finite_diff_gradient: step must be positive");
    NoGradScope no_grad;
    std::vector<double> grad(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) {
        Tensor xp = x.detach(false);
        Tensor xm = x.detach(false);
        xp.mutable_values()[i] = cast_scalar(x.at(i) + h, x.dtype());
        xm.mutable_values()[i] = cast_scalar(x.at(i) - h, x.dtype());
        double fp = f(xp);
        double fm = f(xm);
        if (!std::isfinite(fp) || !std::isfinite(fm))
            fail("finite_diff_gradient: non-finite function value");
        grad[i] = (fp - fm) / (2.0 * h);
    }
    return Tensor::leaf(x.shape(), Dtype::f64, std::move(grad));
}

namespace {

std::vector<double> attr_doubles(const nlohmann::json& attrs, const char* key) {
    return attrs.at(key).get<std::vector<double>>();
}

std::vector<int> attr_ints(const nlohmann::json& attrs, const char* key) {
    return attrs.at(key).get<std::vector<int>>();
}

ConvPadding attr_padding(const nlohmann::json& attrs) {
    std::string p = attrs.value("padding", "symmetric");
    if (p == "symmetric") return ConvPadding::symmetric;
    if (p == "causal") return ConvPadding::causal;
    fail("conv1d: unknown padding '" + p + "'");
}

} // namespace

Tensor apply_primitive(const std::string& kind, const std::vector<Tensor>& inputs,
                       const nlohmann::json& attrs) {
    auto need = [&](std::size_t n) {
        if (inputs.size() != n)
            fail(kind + ": expected " + std::to_string(n) + " inputs, got " +
                 std::to_string(inputs.size()));
    };
    if (kind == "add") { need(2); return add(inputs[0], inputs[1]); }
    if (kind == "subtract") { need(2); return sub(inputs[0], inputs[1]); }
    if (kind == "multiply") { need(2); return mul(inputs[0], inputs[1]); }
    if (kind == "matmul") { need(2); return matmul(inputs[0], inputs[1]); }
    if (kind == "transpose") { need(1); return transpose(inputs[0]); }
    if (kind == "relu") { need(1); return relu(inputs[0]); }
    if (kind == "sigmoid") { need(1); return sigmoid(inputs[0]); }
    if (kind == "softmax") { need(1); return softmax_rows(inputs[0]); }
    if (kind == "layer_norm") {
        need(3);
        return layer_norm(inputs[0], inputs[1], inputs[2], attrs.value("eps", 1e-5));
    }
    if (kind == "conv1d") {
        need(2);
        return conv1d_depthwise(inputs[0], inputs[1], attr_padding(attrs));
    }
    if (kind == "embedding") {
        need(1);
        return embedding_rows(inputs[0], attr_ints(attrs, "ids"));
    }
    if (kind == "concat") { return concat_cols(inputs); }
    if (kind == "split") {
        need(1);
        auto parts = split_cols(inputs[0], attrs.at("parts").get<int>());
        int index = attrs.at("index").get<int>();
        if (index < 0 || index >= static_cast<int>(parts.size()))
            fail("split: index " + std::to_string(index) + " out of range");
        return parts[static_cast<std::size_t>(index)];
    }
    if (kind == "max") { need(1); return reduce_max(inputs[0], attrs.value("axis", 0)); }
    if (kind == "mean") { need(1); return reduce_mean(inputs[0], attrs.value("axis", 0)); }
    if (kind == "sum") { need(1); return sum_all(inputs[0]); }
    if (kind == "dropout") {
        need(1);
        return dropout(inputs[0], attrs.at("p").get<double>(),
                       attrs.at("seed").get<std::uint64_t>(),
                       attrs.value("position", std::uint64_t{0}));
    }
    if (kind == "cross_entropy") {
        need(1);
        std::vector<double> weights;
        if (attrs.contains("weights"))
            weights = attr_doubles(attrs, "weights");
        else
            weights.assign(static_cast<std::size_t>(inputs[0].dim(0)), 1.0);
        return cross_entropy_label_smoothed(inputs[0], attr_ints(attrs, "targets"),
                                            attrs.value("smoothing", 0.0), weights);
    }
    fail("unknown primitive kind '" + kind + "'");
}

} // namespace revdarts
