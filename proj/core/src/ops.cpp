#include "modfuse/ops.hpp"

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numbers>
#include <vector>

namespace modfuse {

namespace {

#ifdef MODFUSE_FINITE_CHECKS
void check_finite(const Tensor& t, const char* op) {
    for (float v : t.values()) {
        if (!std::isfinite(v)) {
            throw DivergenceError(std::string("non-finite value in output of ") + op);
        }
    }
}
#else
void check_finite(const Tensor&, const char*) {}
#endif

Tape* joint_tape(std::initializer_list<const Tensor*> ts) {
    Tape* tape = nullptr;
    for (const Tensor* t : ts) {
        if (!t->on_tape()) continue;
        if (tape != nullptr && tape != t->tape()) {
            throw UsageError("operation mixes tensors from two different tapes");
        }
        tape = t->tape();
    }
    return tape;
}

// Backward rule over the full input list; entries whose `needed` flag is
// false may be left default-constructed.
using PartialBackward =
    std::function<std::vector<Tensor>(const Tensor& g, const std::vector<bool>& needed)>;

Tensor record_op(Tape* tape, Tensor out, std::initializer_list<const Tensor*> ins,
                 PartialBackward fb) {
    if (tape == nullptr) return out;
    std::vector<int> nodes;
    std::vector<std::size_t> picked;
    std::vector<bool> needed(ins.size(), false);
    std::size_t i = 0;
    for (const Tensor* t : ins) {
        if (t->on_tape()) {
            nodes.push_back(t->node());
            picked.push_back(i);
            needed[i] = true;
        }
        ++i;
    }
    Tape::BackwardFn backward = [fb = std::move(fb), picked = std::move(picked),
                                 needed = std::move(needed)](const Tensor& g) {
        std::vector<Tensor> all = fb(g, needed);
        std::vector<Tensor> sel;
        sel.reserve(picked.size());
        for (std::size_t p : picked) sel.push_back(std::move(all[p]));
        return sel;
    };
    return tape->record(std::move(out), std::move(nodes), std::move(backward));
}

void require_same_shape(const char* op, const Tensor& a, const Tensor& b) {
    if (a.shape() != b.shape()) {
        throw DimError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) +
                       " vs " + shape_str(b.shape()));
    }
}

void require_rank(const char* op, const Tensor& t, int rank) {
    if (t.rank() != rank) {
        throw DimError(std::string(op) + ": expected rank " + std::to_string(rank) +
                       ", got " + shape_str(t.shape()));
    }
}

// Raw matmul kernels, double accumulation. Used by forward and backward
// rules alike; backward rules never call the recording ops.
void mm_nn(const float* a, const float* b, float* c, int m, int k, int n) {
    std::vector<double> row(static_cast<std::size_t>(n));
    for (int i = 0; i < m; ++i) {
        std::fill(row.begin(), row.end(), 0.0);
        const float* ai = a + static_cast<std::size_t>(i) * k;
        for (int l = 0; l < k; ++l) {
            const double av = ai[l];
            const float* bl = b + static_cast<std::size_t>(l) * n;
            for (int j = 0; j < n; ++j) row[static_cast<std::size_t>(j)] += av * bl[j];
        }
        float* ci = c + static_cast<std::size_t>(i) * n;
        for (int j = 0; j < n; ++j) ci[j] = static_cast<float>(row[static_cast<std::size_t>(j)]);
    }
}

// c[m x k] = g[m x n] * b[k x n]^T
void mm_nt(const float* g, const float* b, float* c, int m, int n, int k) {
    for (int i = 0; i < m; ++i) {
        const float* gi = g + static_cast<std::size_t>(i) * n;
        for (int l = 0; l < k; ++l) {
            const float* bl = b + static_cast<std::size_t>(l) * n;
            double acc = 0.0;
            for (int j = 0; j < n; ++j) acc += static_cast<double>(gi[j]) * bl[j];
            c[static_cast<std::size_t>(i) * k + l] = static_cast<float>(acc);
        }
    }
}

// c[k x n] = a[m x k]^T * g[m x n]
void mm_tn(const float* a, const float* g, float* c, int m, int k, int n) {
    std::vector<double> acc(static_cast<std::size_t>(k) * n, 0.0);
    for (int i = 0; i < m; ++i) {
        const float* ai = a + static_cast<std::size_t>(i) * k;
        const float* gi = g + static_cast<std::size_t>(i) * n;
        for (int l = 0; l < k; ++l) {
            const double av = ai[l];
            double* al = acc.data() + static_cast<std::size_t>(l) * n;
            for (int j = 0; j < n; ++j) al[j] += av * gi[j];
        }
    }
    for (std::size_t idx = 0; idx < acc.size(); ++idx) c[idx] = static_cast<float>(acc[idx]);
}

struct AxisSpan {
    std::int64_t outer;
    std::int64_t len;
    std::int64_t inner;
};

AxisSpan axis_span(const std::vector<int>& shape, int axis) {
    AxisSpan s{1, shape[static_cast<std::size_t>(axis)], 1};
    for (int i = 0; i < axis; ++i) s.outer *= shape[static_cast<std::size_t>(i)];
    for (int i = axis + 1; i < static_cast<int>(shape.size()); ++i) {
        s.inner *= shape[static_cast<std::size_t>(i)];
    }
    return s;
}

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
    require_rank("matmul", a, 2);
    require_rank("matmul", b, 2);
    const int m = a.dim(0), k = a.dim(1), k2 = b.dim(0), n = b.dim(1);
    if (k != k2) {
        throw DimError("matmul: inner dimensions disagree: " + shape_str(a.shape()) +
                       " vs " + shape_str(b.shape()));
    }
    Tensor out({m, n});
    mm_nn(a.values().data(), b.values().data(), out.values().data(), m, k, n);
    check_finite(out, "matmul");

    Tape* tape = joint_tape({&a, &b});
    return record_op(
        tape, std::move(out), {&a, &b},
        [av = a.values(), bv = b.values(), m, k, n](const Tensor& g,
                                                    const std::vector<bool>& needed) {
            std::vector<Tensor> grads(2);
            if (needed[0]) {
                grads[0] = Tensor({m, k});
                mm_nt(g.values().data(), bv.data(), grads[0].values().data(), m, n, k);
            }
            if (needed[1]) {
                grads[1] = Tensor({k, n});
                mm_tn(av.data(), g.values().data(), grads[1].values().data(), m, k, n);
            }
            return grads;
        });
}

Tensor add(const Tensor& a, const Tensor& b) {
    require_same_shape("add", a, b);
    Tensor out(a.shape());
    const std::size_t n = out.values().size();
    for (std::size_t i = 0; i < n; ++i) out.values()[i] = a.values()[i] + b.values()[i];
    check_finite(out, "add");

    Tape* tape = joint_tape({&a, &b});
    return record_op(tape, std::move(out), {&a, &b},
                     [](const Tensor& g, const std::vector<bool>&) {
                         return std::vector<Tensor>{g, g};
                     });
}

Tensor sub(const Tensor& a, const Tensor& b) {
    require_same_shape("sub", a, b);
    Tensor out(a.shape());
    const std::size_t n = out.values().size();
    for (std::size_t i = 0; i < n; ++i) out.values()[i] = a.values()[i] - b.values()[i];
    check_finite(out, "sub");

    Tape* tape = joint_tape({&a, &b});
    return record_op(tape, std::move(out), {&a, &b},
                     [](const Tensor& g, const std::vector<bool>&) {
                         Tensor neg(g.shape());
                         for (std::size_t i = 0; i < neg.values().size(); ++i) {
                             neg.values()[i] = -g.values()[i];
                         }
                         return std::vector<Tensor>{g, std::move(neg)};
                     });
}

Tensor mul(const Tensor& a, const Tensor& b) {
    require_same_shape("mul", a, b);
    Tensor out(a.shape());
    const std::size_t n = out.values().size();
    for (std::size_t i = 0; i < n; ++i) out.values()[i] = a.values()[i] * b.values()[i];
    check_finite(out, "mul");

    Tape* tape = joint_tape({&a, &b});
    return record_op(tape, std::move(out), {&a, &b},
                     [av = a.values(), bv = b.values()](const Tensor& g,
                                                        const std::vector<bool>& needed) {
                         std::vector<Tensor> grads(2);
                         if (needed[0]) {
                             grads[0] = Tensor(g.shape());
                             for (std::size_t i = 0; i < bv.size(); ++i) {
                                 grads[0].values()[i] = g.values()[i] * bv[i];
                             }
                         }
                         if (needed[1]) {
                             grads[1] = Tensor(g.shape());
                             for (std::size_t i = 0; i < av.size(); ++i) {
                                 grads[1].values()[i] = g.values()[i] * av[i];
                             }
                         }
                         return grads;
                     });
}

Tensor scale(const Tensor& a, float factor) {
    Tensor out(a.shape());
    for (std::size_t i = 0; i < out.values().size(); ++i) {
        out.values()[i] = a.values()[i] * factor;
    }
    check_finite(out, "scale");

    Tape* tape = joint_tape({&a});
    return record_op(tape, std::move(out), {&a},
                     [factor](const Tensor& g, const std::vector<bool>&) {
                         Tensor ga(g.shape());
                         for (std::size_t i = 0; i < ga.values().size(); ++i) {
                             ga.values()[i] = g.values()[i] * factor;
                         }
                         return std::vector<Tensor>{std::move(ga)};
                     });
}

Tensor add_scalar(const Tensor& a, float term) {
    Tensor out(a.shape());
    for (std::size_t i = 0; i < out.values().size(); ++i) {
        out.values()[i] = a.values()[i] + term;
    }
    check_finite(out, "add_scalar");

    Tape* tape = joint_tape({&a});
    return record_op(tape, std::move(out), {&a},
                     [](const Tensor& g, const std::vector<bool>&) {
                         return std::vector<Tensor>{g};
                     });
}

namespace {

// Exact gelu: x * Phi(x) with the standard normal CDF.
double gelu_fwd(double x) {
    return x * 0.5 * (1.0 + std::erf(x / std::numbers::sqrt2));
}

double gelu_bwd(double x) {
    const double cdf = 0.5 * (1.0 + std::erf(x / std::numbers::sqrt2));
    const double pdf = std::exp(-0.5 * x * x) / std::sqrt(2.0 * std::numbers::pi);
    return cdf + x * pdf;
}

}  // namespace

Tensor gelu(const Tensor& a) {
    Tensor out(a.shape());
    for (std::size_t i = 0; i < out.values().size(); ++i) {
        out.values()[i] = static_cast<float>(gelu_fwd(a.values()[i]));
    }
    check_finite(out, "gelu");

    Tape* tape = joint_tape({&a});
    return record_op(tape, std::move(out), {&a},
                     [av = a.values()](const Tensor& g, const std::vector<bool>&) {
                         Tensor ga(g.shape());
                         for (std::size_t i = 0; i < av.size(); ++i) {
                             ga.values()[i] = static_cast<float>(
                                 g.values()[i] * gelu_bwd(av[i]));
                         }
                         return std::vector<Tensor>{std::move(ga)};
                     });
}

Tensor mean(const Tensor& a) {
    double acc = 0.0;
    for (float v : a.values()) acc += v;
    const std::int64_t n = a.size();
    Tensor out = Tensor::scalar(static_cast<float>(acc / static_cast<double>(n)));
    check_finite(out, "mean");

    Tape* tape = joint_tape({&a});
    return record_op(tape, std::move(out), {&a},
                     [shape = a.shape(), n](const Tensor& g, const std::vector<bool>&) {
                         return std::vector<Tensor>{Tensor::full(
                             shape, g.item() / static_cast<float>(n))};
                     });
}

Tensor sum(const Tensor& a) {
    double acc = 0.0;
    for (float v : a.values()) acc += v;
    Tensor out = Tensor::scalar(static_cast<float>(acc));
    check_finite(out, "sum");

    Tape* tape = joint_tape({&a});
    return record_op(tape, std::move(out), {&a},
                     [shape = a.shape()](const Tensor& g, const std::vector<bool>&) {
                         return std::vector<Tensor>{Tensor::full(shape, g.item())};
                     });
}

Tensor reshape(const Tensor& a, std::vector<int> shape) {
    Tensor out(shape, a.values());  // validates element count
    check_finite(out, "reshape");

    Tape* tape = joint_tape({&a});
    return record_op(tape, std::move(out), {&a},
                     [src = a.shape()](const Tensor& g, const std::vector<bool>&) {
                         return std::vector<Tensor>{Tensor(src, g.values())};
                     });
}

Tensor transpose(const Tensor& a) {
    require_rank("transpose", a, 2);
    const int m = a.dim(0), n = a.dim(1);
    Tensor out({n, m});
    for (int i = 0; i < m; ++i) {
        for (int j = 0; j < n; ++j) {
            out.values()[static_cast<std::size_t>(j) * m + i] =
                a.values()[static_cast<std::size_t>(i) * n + j];
        }
    }
    check_finite(out, "transpose");

    Tape* tape = joint_tape({&a});
    return record_op(tape, std::move(out), {&a},
                     [m, n](const Tensor& g, const std::vector<bool>&) {
                         Tensor ga({m, n});
                         for (int j = 0; j < n; ++j) {
                             for (int i = 0; i < m; ++i) {
                                 ga.values()[static_cast<std::size_t>(i) * n + j] =
                                     g.values()[static_cast<std::size_t>(j) * m + i];
                             }
                         }
                         return std::vector<Tensor>{std::move(ga)};
                     });
}

namespace {

void slice_copy(const std::vector<int>& src_shape, const float* src, int axis, int start,
                int len, float* dst) {
    const AxisSpan s = axis_span(src_shape, axis);
    for (std::int64_t o = 0; o < s.outer; ++o) {
        const float* sp = src + (o * s.len + start) * s.inner;
        float* dp = dst + o * len * s.inner;
        std::copy(sp, sp + static_cast<std::int64_t>(len) * s.inner, dp);
    }
}

void slice_scatter_add(const std::vector<int>& dst_shape, float* dst, int axis, int start,
                       int len, const float* part) {
    const AxisSpan s = axis_span(dst_shape, axis);
    for (std::int64_t o = 0; o < s.outer; ++o) {
        float* dp = dst + (o * s.len + start) * s.inner;
        const float* sp = part + o * len * s.inner;
        for (std::int64_t i = 0; i < static_cast<std::int64_t>(len) * s.inner; ++i) {
            dp[i] += sp[i];
        }
    }
}

}  // namespace

Tensor slice(const Tensor& a, int axis, int start, int len) {
    if (axis < 0 || axis >= a.rank()) {
        throw UsageError("slice: axis " + std::to_string(axis) + " out of range for " +
                         shape_str(a.shape()));
    }
    if (len < 1 || start < 0 || start + len > a.dim(axis)) {
        throw UsageError("slice: range [" + std::to_string(start) + ", " +
                         std::to_string(start + len) + ") invalid for " +
                         shape_str(a.shape()) + " axis " + std::to_string(axis));
    }
    std::vector<int> out_shape = a.shape();
    out_shape[static_cast<std::size_t>(axis)] = len;
    Tensor out(out_shape);
    slice_copy(a.shape(), a.values().data(), axis, start, len, out.values().data());
    check_finite(out, "slice");

    Tape* tape = joint_tape({&a});
    return record_op(tape, std::move(out), {&a},
                     [src = a.shape(), axis, start, len](const Tensor& g,
                                                         const std::vector<bool>&) {
                         Tensor ga = Tensor::zeros(src);
                         slice_scatter_add(src, ga.values().data(), axis, start, len,
                                           g.values().data());
                         return std::vector<Tensor>{std::move(ga)};
                     });
}

Tensor concat(const std::vector<Tensor>& parts, int axis) {
    if (parts.empty()) throw UsageError("concat: no inputs");
    const int rank = parts[0].rank();
    if (axis < 0 || axis >= rank) {
        throw UsageError("concat: axis " + std::to_string(axis) + " out of range for " +
                         shape_str(parts[0].shape()));
    }
    std::vector<int> out_shape = parts[0].shape();
    int total = parts[0].dim(axis);
    for (std::size_t p = 1; p < parts.size(); ++p) {
        if (parts[p].rank() != rank) {
            throw DimError("concat: rank mismatch " + shape_str(parts[0].shape()) + " vs " +
                           shape_str(parts[p].shape()));
        }
        for (int d = 0; d < rank; ++d) {
            if (d != axis && parts[p].dim(d) != out_shape[static_cast<std::size_t>(d)]) {
                throw DimError("concat: shape mismatch " + shape_str(parts[0].shape()) +
                               " vs " + shape_str(parts[p].shape()));
            }
        }
        total += parts[p].dim(axis);
    }
    out_shape[static_cast<std::size_t>(axis)] = total;

    Tensor out(out_shape);
    int offset = 0;
    const AxisSpan s = axis_span(out_shape, axis);
    for (const Tensor& part : parts) {
        const int len = part.dim(axis);
        for (std::int64_t o = 0; o < s.outer; ++o) {
            const float* sp = part.values().data() + o * len * s.inner;
            float* dp = out.values().data() + (o * s.len + offset) * s.inner;
            std::copy(sp, sp + static_cast<std::int64_t>(len) * s.inner, dp);
        }
        offset += len;
    }
    check_finite(out, "concat");

    Tape* tape = nullptr;
    for (const Tensor& p : parts) {
        Tape* pt = joint_tape({&p});
        if (pt != nullptr) {
            if (tape != nullptr && tape != pt) {
                throw UsageError("operation mixes tensors from two different tapes");
            }
            tape = pt;
        }
    }
    if (tape == nullptr) return out;

    std::vector<int> nodes;
    std::vector<std::size_t> picked;
    std::vector<int> lens(parts.size());
    for (std::size_t p = 0; p < parts.size(); ++p) {
        lens[p] = parts[p].dim(axis);
        if (parts[p].on_tape()) {
            nodes.push_back(parts[p].node());
            picked.push_back(p);
        }
    }
    std::vector<std::vector<int>> part_shapes;
    part_shapes.reserve(parts.size());
    for (const Tensor& p : parts) part_shapes.push_back(p.shape());

    Tape::BackwardFn backward = [axis, lens, picked, part_shapes,
                                 out_shape](const Tensor& g) {
        std::vector<Tensor> sel;
        sel.reserve(picked.size());
        for (std::size_t p : picked) {
            int offset = 0;
            for (std::size_t q = 0; q < p; ++q) offset += lens[q];
            Tensor gp(part_shapes[p]);
            slice_copy(out_shape, g.values().data(), axis, offset, lens[p],
                       gp.values().data());
            sel.push_back(std::move(gp));
        }
        return sel;
    };
    return tape->record(std::move(out), std::move(nodes), std::move(backward));
}

Tensor softmax(const Tensor& a, int axis) {
    if (axis < 0 || axis >= a.rank()) {
        throw UsageError("softmax: axis " + std::to_string(axis) + " out of range for " +
                         shape_str(a.shape()));
    }
    const AxisSpan s = axis_span(a.shape(), axis);
    Tensor out(a.shape());
    const float* x = a.values().data();
    float* y = out.values().data();
    for (std::int64_t o = 0; o < s.outer; ++o) {
        for (std::int64_t i = 0; i < s.inner; ++i) {
            const std::int64_t base = o * s.len * s.inner + i;
            double mx = -HUGE_VAL;
            for (std::int64_t t = 0; t < s.len; ++t) {
                mx = std::max(mx, static_cast<double>(x[base + t * s.inner]));
            }
            double z = 0.0;
            for (std::int64_t t = 0; t < s.len; ++t) {
                z += std::exp(static_cast<double>(x[base + t * s.inner]) - mx);
            }
            for (std::int64_t t = 0; t < s.len; ++t) {
                y[base + t * s.inner] = static_cast<float>(
                    std::exp(static_cast<double>(x[base + t * s.inner]) - mx) / z);
            }
        }
    }
    check_finite(out, "softmax");

    Tape* tape = joint_tape({&a});
    return record_op(
        tape, out, {&a},
        [yv = out.values(), shape = a.shape(), axis](const Tensor& g,
                                                     const std::vector<bool>&) {
            const AxisSpan s = axis_span(shape, axis);
            Tensor ga(shape);
            const float* gv = g.values().data();
            float* dst = ga.values().data();
            for (std::int64_t o = 0; o < s.outer; ++o) {
                for (std::int64_t i = 0; i < s.inner; ++i) {
                    const std::int64_t base = o * s.len * s.inner + i;
                    double dot = 0.0;
                    for (std::int64_t t = 0; t < s.len; ++t) {
                        const std::int64_t idx = base + t * s.inner;
                        dot += static_cast<double>(gv[idx]) * yv[static_cast<std::size_t>(idx)];
                    }
                    for (std::int64_t t = 0; t < s.len; ++t) {
                        const std::int64_t idx = base + t * s.inner;
                        dst[idx] = static_cast<float>(
                            yv[static_cast<std::size_t>(idx)] *
                            (static_cast<double>(gv[idx]) - dot));
                    }
                }
            }
            return std::vector<Tensor>{std::move(ga)};
        });
}

Tensor repeat_rows(const Tensor& v, int rows) {
    require_rank("repeat_rows", v, 1);
    if (rows < 1) throw UsageError("repeat_rows: rows must be >= 1");
    const int d = v.dim(0);
    Tensor out({rows, d});
    for (int r = 0; r < rows; ++r) {
        std::copy(v.values().begin(), v.values().end(),
                  out.values().begin() + static_cast<std::size_t>(r) * d);
    }
    check_finite(out, "repeat_rows");

    Tape* tape = joint_tape({&v});
    return record_op(tape, std::move(out), {&v},
                     [rows, d](const Tensor& g, const std::vector<bool>&) {
                         Tensor gv({d});
                         for (int j = 0; j < d; ++j) {
                             double acc = 0.0;
                             for (int r = 0; r < rows; ++r) {
                                 acc += g.values()[static_cast<std::size_t>(r) * d + j];
                             }
                             gv.values()[static_cast<std::size_t>(j)] =
                                 static_cast<float>(acc);
                         }
                         return std::vector<Tensor>{std::move(gv)};
                     });
}

Tensor conv1d_depthwise(const Tensor& x, const Tensor& kernels, int stride) {
    require_rank("conv1d_depthwise", x, 2);
    require_rank("conv1d_depthwise", kernels, 2);
    const int c = x.dim(0), t = x.dim(1), ck = kernels.dim(0), k = kernels.dim(1);
    if (c != ck) {
        throw DimError("conv1d_depthwise: channel mismatch " + shape_str(x.shape()) +
                       " vs " + shape_str(kernels.shape()));
    }
    if (stride < 1) throw ConfigError("conv1d_depthwise: stride must be >= 1");
    if (k > t) {
        throw ConfigError("conv1d_depthwise: kernel length " + std::to_string(k) +
                          " exceeds signal length " + std::to_string(t));
    }
    const int t_out = (t - k) / stride + 1;
    Tensor out({c, t_out});
    for (int ch = 0; ch < c; ++ch) {
        const float* xc = x.values().data() + static_cast<std::size_t>(ch) * t;
        const float* kc = kernels.values().data() + static_cast<std::size_t>(ch) * k;
        float* oc = out.values().data() + static_cast<std::size_t>(ch) * t_out;
        for (int to = 0; to < t_out; ++to) {
            double acc = 0.0;
            const float* window = xc + static_cast<std::size_t>(to) * stride;
            for (int j = 0; j < k; ++j) acc += static_cast<double>(window[j]) * kc[j];
            oc[to] = static_cast<float>(acc);
        }
    }
    check_finite(out, "conv1d_depthwise");

    Tape* tape = joint_tape({&x, &kernels});
    return record_op(
        tape, std::move(out), {&x, &kernels},
        [xv = x.values(), kv = kernels.values(), c, t, k, stride,
         t_out](const Tensor& g, const std::vector<bool>& needed) {
            std::vector<Tensor> grads(2);
            if (needed[0]) {
                grads[0] = Tensor::zeros({c, t});
                for (int ch = 0; ch < c; ++ch) {
                    const float* kc = kv.data() + static_cast<std::size_t>(ch) * k;
                    const float* gc = g.values().data() + static_cast<std::size_t>(ch) * t_out;
                    float* dc = grads[0].values().data() + static_cast<std::size_t>(ch) * t;
                    for (int to = 0; to < t_out; ++to) {
                        for (int j = 0; j < k; ++j) {
                            dc[to * stride + j] += gc[to] * kc[j];
                        }
                    }
                }
            }
            if (needed[1]) {
                grads[1] = Tensor({c, k});
                for (int ch = 0; ch < c; ++ch) {
                    const float* xc = xv.data() + static_cast<std::size_t>(ch) * t;
                    const float* gc = g.values().data() + static_cast<std::size_t>(ch) * t_out;
                    float* dk = grads[1].values().data() + static_cast<std::size_t>(ch) * k;
                    for (int j = 0; j < k; ++j) {
                        double acc = 0.0;
                        for (int to = 0; to < t_out; ++to) {
                            acc += static_cast<double>(gc[to]) * xc[to * stride + j];
                        }
                        dk[j] = static_cast<float>(acc);
                    }
                }
            }
            return grads;
        });
}

Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, float eps) {
    require_rank("layer_norm", x, 2);
    require_rank("layer_norm", gamma, 1);
    require_rank("layer_norm", beta, 1);
    const int n = x.dim(0), d = x.dim(1);
    if (d < 2) throw UsageError("layer_norm: feature dimension must be >= 2");
    if (gamma.dim(0) != d || beta.dim(0) != d) {
        throw DimError("layer_norm: affine params " + shape_str(gamma.shape()) + "/" +
                       shape_str(beta.shape()) + " do not match " + shape_str(x.shape()));
    }

    Tensor out({n, d});
    Tensor xhat({n, d});
    std::vector<float> inv_std(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
        const float* xi = x.values().data() + static_cast<std::size_t>(i) * d;
        double mu = 0.0;
        for (int j = 0; j < d; ++j) mu += xi[j];
        mu /= d;
        double var = 0.0;
        for (int j = 0; j < d; ++j) {
            const double c = xi[j] - mu;
            var += c * c;
        }
        var /= d;  // population variance
        const double inv = 1.0 / std::sqrt(var + static_cast<double>(eps));
        inv_std[static_cast<std::size_t>(i)] = static_cast<float>(inv);
        float* hi = xhat.values().data() + static_cast<std::size_t>(i) * d;
        float* oi = out.values().data() + static_cast<std::size_t>(i) * d;
        for (int j = 0; j < d; ++j) {
            hi[j] = static_cast<float>((xi[j] - mu) * inv);
            oi[j] = hi[j] * gamma.values()[static_cast<std::size_t>(j)] +
                    beta.values()[static_cast<std::size_t>(j)];
        }
    }
    check_finite(out, "layer_norm");

    Tape* tape = joint_tape({&x, &gamma, &beta});
    return record_op(
        tape, std::move(out), {&x, &gamma, &beta},
        [hv = xhat.values(), inv_std = std::move(inv_std), gv = gamma.values(), n,
         d](const Tensor& g, const std::vector<bool>& needed) {
            std::vector<Tensor> grads(3);
            if (needed[0]) {
                grads[0] = Tensor({n, d});
                for (int i = 0; i < n; ++i) {
                    const float* gi = g.values().data() + static_cast<std::size_t>(i) * d;
                    const float* hi = hv.data() + static_cast<std::size_t>(i) * d;
                    double mean_dh = 0.0, mean_dh_h = 0.0;
                    for (int j = 0; j < d; ++j) {
                        const double dh = static_cast<double>(gi[j]) * gv[static_cast<std::size_t>(j)];
                        mean_dh += dh;
                        mean_dh_h += dh * hi[j];
                    }
                    mean_dh /= d;
                    mean_dh_h /= d;
                    float* di = grads[0].values().data() + static_cast<std::size_t>(i) * d;
                    const double inv = inv_std[static_cast<std::size_t>(i)];
                    for (int j = 0; j < d; ++j) {
                        const double dh = static_cast<double>(gi[j]) * gv[static_cast<std::size_t>(j)];
                        di[j] = static_cast<float>(inv * (dh - mean_dh - hi[j] * mean_dh_h));
                    }
                }
            }
            if (needed[1]) {
                grads[1] = Tensor({d});
                for (int j = 0; j < d; ++j) {
                    double acc = 0.0;
                    for (int i = 0; i < n; ++i) {
                        acc += static_cast<double>(
                                   g.values()[static_cast<std::size_t>(i) * d + j]) *
                               hv[static_cast<std::size_t>(i) * d + j];
                    }
                    grads[1].values()[static_cast<std::size_t>(j)] = static_cast<float>(acc);
                }
            }
            if (needed[2]) {
                grads[2] = Tensor({d});
                for (int j = 0; j < d; ++j) {
                    double acc = 0.0;
                    for (int i = 0; i < n; ++i) {
                        acc += g.values()[static_cast<std::size_t>(i) * d + j];
                    }
                    grads[2].values()[static_cast<std::size_t>(j)] = static_cast<float>(acc);
                }
            }
            return grads;
        });
}

Tensor cross_entropy(const Tensor& logits, const std::vector<int>& labels) {
    require_rank("cross_entropy", logits, 2);
    const int n = logits.dim(0), c = logits.dim(1);
    if (static_cast<int>(labels.size()) != n) {
        throw UsageError("cross_entropy: " + std::to_string(labels.size()) +
                         " labels for " + std::to_string(n) + " rows");
    }
    for (int i = 0; i < n; ++i) {
        if (labels[static_cast<std::size_t>(i)] < 0 || labels[static_cast<std::size_t>(i)] >= c) {
            throw DataError("cross_entropy: label " +
                            std::to_string(labels[static_cast<std::size_t>(i)]) +
                            " out of range [0, " + std::to_string(c) + ") at row " +
                            std::to_string(i));
        }
    }

    Tensor probs({n, c});
    double loss = 0.0;
    for (int i = 0; i < n; ++i) {
        const float* xi = logits.values().data() + static_cast<std::size_t>(i) * c;
        double mx = -HUGE_VAL;
        for (int j = 0; j < c; ++j) mx = std::max(mx, static_cast<double>(xi[j]));
        double z = 0.0;
        for (int j = 0; j < c; ++j) z += std::exp(static_cast<double>(xi[j]) - mx);
        const double log_z = mx + std::log(z);
        loss += log_z - static_cast<double>(xi[labels[static_cast<std::size_t>(i)]]);
        float* pi = probs.values().data() + static_cast<std::size_t>(i) * c;
        for (int j = 0; j < c; ++j) {
            pi[j] = static_cast<float>(std::exp(static_cast<double>(xi[j]) - log_z));
        }
    }
    Tensor out = Tensor::scalar(static_cast<float>(loss / n));
    check_finite(out, "cross_entropy");

    Tape* tape = joint_tape({&logits});
    return record_op(tape, std::move(out), {&logits},
                     [pv = probs.values(), labels, n, c](const Tensor& g,
                                                         const std::vector<bool>&) {
                         Tensor gl({n, c});
                         const float s = g.item() / static_cast<float>(n);
                         for (int i = 0; i < n; ++i) {
                             for (int j = 0; j < c; ++j) {
                                 const std::size_t idx =
                                     static_cast<std::size_t>(i) * c + j;
                                 float p = pv[idx];
                                 if (j == labels[static_cast<std::size_t>(i)]) p -= 1.0f;
                                 gl.values()[idx] = p * s;
                             }
                         }
                         return std::vector<Tensor>{std::move(gl)};
                     });
}

namespace {

void check_patch_geometry(const char* op, int h, int w, int ph, int pw) {
    if (ph < 1 || pw < 1 || h % ph != 0 || w % pw != 0) {
        throw ConfigError(std::string(op) + ": patch " + std::to_string(ph) + "x" +
                          std::to_string(pw) + " does not tile image " +
                          std::to_string(h) + "x" + std::to_string(w));
    }
}

// out[(pr*(W/pw)+pc), (r*pw+c)] = img[pr*ph+r, pc*pw+c]
void patchify_copy(const float* img, float* out, int h, int w, int ph, int pw) {
    const int cols = w / pw;
    for (int r = 0; r < h; ++r) {
        const int pr = r / ph, ro = r % ph;
        for (int c = 0; c < w; ++c) {
            const int pc = c / pw, co = c % pw;
            out[static_cast<std::size_t>(pr * cols + pc) * (ph * pw) + ro * pw + co] =
                img[static_cast<std::size_t>(r) * w + c];
        }
    }
}

void unpatchify_copy(const float* tokens, float* img, int h, int w, int ph, int pw) {
    const int cols = w / pw;
    for (int r = 0; r < h; ++r) {
        const int pr = r / ph, ro = r % ph;
        for (int c = 0; c < w; ++c) {
            const int pc = c / pw, co = c % pw;
            img[static_cast<std::size_t>(r) * w + c] =
                tokens[static_cast<std::size_t>(pr * cols + pc) * (ph * pw) + ro * pw + co];
        }
    }
}

}  // namespace

Tensor patchify(const Tensor& image, int ph, int pw) {
    require_rank("patchify", image, 2);
    const int h = image.dim(0), w = image.dim(1);
    check_patch_geometry("patchify", h, w, ph, pw);
    Tensor out({(h / ph) * (w / pw), ph * pw});
    patchify_copy(image.values().data(), out.values().data(), h, w, ph, pw);
    check_finite(out, "patchify");

    Tape* tape = joint_tape({&image});
    return record_op(tape, std::move(out), {&image},
                     [h, w, ph, pw](const Tensor& g, const std::vector<bool>&) {
                         Tensor gi({h, w});
                         unpatchify_copy(g.values().data(), gi.values().data(), h, w, ph, pw);
                         return std::vector<Tensor>{std::move(gi)};
                     });
}

Tensor unpatchify(const Tensor& tokens, int height, int width, int ph, int pw) {
    require_rank("unpatchify", tokens, 2);
    check_patch_geometry("unpatchify", height, width, ph, pw);
    if (tokens.dim(0) != (height / ph) * (width / pw) || tokens.dim(1) != ph * pw) {
        throw DimError("unpatchify: token shape " + shape_str(tokens.shape()) +
                       " does not match image " + std::to_string(height) + "x" +
                       std::to_string(width) + " with patch " + std::to_string(ph) + "x" +
                       std::to_string(pw));
    }
    Tensor out({height, width});
    unpatchify_copy(tokens.values().data(), out.values().data(), height, width, ph, pw);
    check_finite(out, "unpatchify");

    Tape* tape = joint_tape({&tokens});
    return record_op(tape, std::move(out), {&tokens},
                     [height, width, ph, pw, shape = tokens.shape()](
                         const Tensor& g, const std::vector<bool>&) {
                         Tensor gt(shape);
                         patchify_copy(g.values().data(), gt.values().data(), height,
                                       width, ph, pw);
                         return std::vector<Tensor>{std::move(gt)};
                     });
}

GradCheckReport grad_check(const std::string& op_name, const TensorFn& f,
                           const std::vector<Tensor>& inputs, float eps) {
    if (eps <= 0.0f) throw UsageError("grad_check: eps must be positive");

    Tape tape;
    std::vector<Tensor> bound;
    bound.reserve(inputs.size());
    for (const Tensor& x : inputs) bound.push_back(tape.leaf(x, true));
    const Tensor loss = f(bound);
    if (loss.size() != 1) {
        throw UsageError("grad_check: function under test must return a scalar");
    }
    const GradientMap grads = tape.backward(loss);

    GradCheckReport report;
    report.op_name = op_name;
    report.per_param_errors.assign(inputs.size(), 0.0f);

    for (std::size_t p = 0; p < inputs.size(); ++p) {
        const Tensor& analytic = grads.grad(bound[p]);
        std::vector<Tensor> probe = inputs;
        for (std::size_t c = 0; c < probe[p].values().size(); ++c) {
            const float orig = probe[p].values()[c];
            const float hi = orig + eps;
            const float lo = orig - eps;

            probe[p].values()[c] = hi;
            const double f_hi = static_cast<double>(f(probe).item());
            probe[p].values()[c] = lo;
            const double f_lo = static_cast<double>(f(probe).item());
            probe[p].values()[c] = orig;

            // Use the realized f32 perturbation, not the nominal eps.
            const double span = static_cast<double>(hi) - static_cast<double>(lo);
            const double numeric = (f_hi - f_lo) / span;
            const double a = static_cast<double>(analytic.values()[c]);
            const double denom = std::max({std::fabs(a), std::fabs(numeric), 1e-8});
            const float rel = static_cast<float>(std::fabs(a - numeric) / denom);
            report.per_param_errors[p] = std::max(report.per_param_errors[p], rel);
        }
        report.max_rel_error = std::max(report.max_rel_error, report.per_param_errors[p]);
    }
    return report;
}

GradCheckReport grad_check(const std::string& op_name,
                           const std::function<Tensor(const Tensor&)>& f,
                           const Tensor& input, float eps) {
    return grad_check(
        op_name, [&f](const std::vector<Tensor>& xs) { return f(xs[0]); },
        std::vector<Tensor>{input}, eps);
}

}  // namespace modfuse
