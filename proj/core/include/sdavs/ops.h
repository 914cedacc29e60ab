#pragma once

// Differentiable operations on sdavs::Tensor. Forward math runs in the
// tensor's scalar type (float by default; tests instantiate double shadows).
// Every op validates shapes, checks outputs for NaN/Inf, and registers an
// analytic backward rule on the thread-local tape.

#include <algorithm>
#include <cmath>
#include <cstring>

#include "sdavs/rng.h"
#include "sdavs/tensor.h"

namespace sdavs {

namespace detail {

// ---------- broadcasting ----------

inline Shape broadcast_shape(const char* op, const Shape& a, const Shape& b) {
    size_t r = std::max(a.size(), b.size());
    Shape out(r);
    for (size_t i = 0; i < r; ++i) {
        int64_t da = i < r - a.size() ? 1 : a[i - (r - a.size())];
        int64_t db = i < r - b.size() ? 1 : b[i - (r - b.size())];
        if (da != db && da != 1 && db != 1)
            throw std::runtime_error(std::string(op) + ": shapes " + shape_str(a) + " and " +
                                     shape_str(b) + " are not broadcastable");
        out[i] = std::max(da, db);
    }
    return out;
}

// Row-major strides of `shape` aligned to `out` (trailing alignment),
// with 0 on broadcast axes.
inline std::vector<int64_t> bcast_strides(const Shape& shape, const Shape& out) {
    std::vector<int64_t> st(out.size(), 0);
    int64_t acc = 1;
    for (size_t i = 0; i < shape.size(); ++i) {
        size_t ri = shape.size() - 1 - i;      // axis in `shape`
        size_t ro = out.size() - 1 - i;        // aligned axis in `out`
        st[ro] = (shape[ri] == 1 && out[ro] != 1) ? 0 : acc;
        acc *= shape[ri];
    }
    return st;
}

// Calls fn(io, ia, ib) for every output element of a broadcast binary op.
template <typename Fn>
void for_each_bcast(const Shape& out, const std::vector<int64_t>& sa,
                    const std::vector<int64_t>& sb, Fn&& fn) {
    size_t r = out.size();
    int64_t total = numel(out);
    if (total == 0) return;
    if (r == 0) {
        fn(0, 0, 0);
        return;
    }
    int64_t inner = out[r - 1];
    int64_t outer = total / inner;
    std::vector<int64_t> idx(r > 1 ? r - 1 : 0, 0);
    int64_t sa_in = sa[r - 1], sb_in = sb[r - 1];
    int64_t io = 0;
    for (int64_t o = 0; o < outer; ++o) {
        int64_t ia = 0, ib = 0;
        for (size_t d = 0; d + 1 < r; ++d) {
            ia += idx[d] * sa[d];
            ib += idx[d] * sb[d];
        }
        for (int64_t i = 0; i < inner; ++i)
            fn(io + i, ia + i * sa_in, ib + i * sb_in);
        io += inner;
        for (size_t d = r - 1; d-- > 0;) {
            if (++idx[d] < out[d]) break;
            idx[d] = 0;
        }
    }
}

template <typename S>
inline S dot(const S* a, const S* b, int64_t n) {
    S acc[8] = {S(0), S(0), S(0), S(0), S(0), S(0), S(0), S(0)};
    int64_t i = 0;
    for (; i + 8 <= n; i += 8)
        for (int64_t u = 0; u < 8; ++u) acc[u] += a[i + u] * b[i + u];
    S s = ((acc[0] + acc[1]) + (acc[2] + acc[3])) + ((acc[4] + acc[5]) + (acc[6] + acc[7]));
    for (; i < n; ++i) s += a[i] * b[i];
    return s;
}

// C(m,n) += A(m,k) @ B(k,n). Two shapes matter here: wide n (axpy rows, blocked
// four output rows at a time so each B row is loaded once per block) and narrow
// n (<= 16: attention gradients), where a fixed-width register tile with the
// k loop innermost avoids per-iteration row traffic.
template <typename S>
void mm_nn(const S* A, const S* B, S* C, int64_t m, int64_t k, int64_t n) {
    if (n <= 16) {
        S acc[4][16];
        int64_t i = 0;
        for (; i + 4 <= m; i += 4) {
            for (auto& row : acc)
                for (S& v : row) v = S(0);
            const S* a0 = A + i * k;
            const S* a1 = a0 + k;
            const S* a2 = a1 + k;
            const S* a3 = a2 + k;
            for (int64_t p = 0; p < k; ++p) {
                const S* b = B + p * n;
                const S s0 = a0[p], s1 = a1[p], s2 = a2[p], s3 = a3[p];
                for (int64_t j = 0; j < n; ++j) {
                    const S bv = b[j];
                    acc[0][j] += s0 * bv;
                    acc[1][j] += s1 * bv;
                    acc[2][j] += s2 * bv;
                    acc[3][j] += s3 * bv;
                }
            }
            for (int64_t u = 0; u < 4; ++u) {
                S* c = C + (i + u) * n;
                for (int64_t j = 0; j < n; ++j) c[j] += acc[u][j];
            }
        }
        for (; i < m; ++i) {
            S* c = C + i * n;
            const S* a = A + i * k;
            for (int64_t p = 0; p < k; ++p) {
                const S s = a[p];
                const S* b = B + p * n;
                for (int64_t j = 0; j < n; ++j) c[j] += s * b[j];
            }
        }
        return;
    }
    int64_t i = 0;
    for (; i + 4 <= m; i += 4) {
        S* c0 = C + i * n;
        S* c1 = c0 + n;
        S* c2 = c1 + n;
        S* c3 = c2 + n;
        const S* a0 = A + i * k;
        const S* a1 = a0 + k;
        const S* a2 = a1 + k;
        const S* a3 = a2 + k;
        for (int64_t p = 0; p < k; ++p) {
            const S* b = B + p * n;
            const S s0 = a0[p], s1 = a1[p], s2 = a2[p], s3 = a3[p];
            for (int64_t j = 0; j < n; ++j) {
                const S bv = b[j];
                c0[j] += s0 * bv;
                c1[j] += s1 * bv;
                c2[j] += s2 * bv;
                c3[j] += s3 * bv;
            }
        }
    }
    for (; i < m; ++i) {
        S* c = C + i * n;
        const S* a = A + i * k;
        for (int64_t p = 0; p < k; ++p) {
            const S s = a[p];
            const S* b = B + p * n;
            for (int64_t j = 0; j < n; ++j) c[j] += s * b[j];
        }
    }
}

// C(m,n) += A(m,k) @ B(n,k)^T. Transposing B once and running the blocked
// mm_nn turns row-pair dot products (horizontal sums) into contiguous axpys;
// every hot call site has a small transposed operand.
template <typename S>
void mm_nt(const S* A, const S* B, S* C, int64_t m, int64_t k, int64_t n) {
    thread_local std::vector<S> bt;
    bt.resize(static_cast<size_t>(k * n));
    for (int64_t j = 0; j < n; ++j) {
        const S* src = B + j * k;
        for (int64_t p = 0; p < k; ++p) bt[static_cast<size_t>(p * n + j)] = src[p];
    }
    mm_nn(A, bt.data(), C, m, k, n);
}

// C(m,n) += A(k,m)^T @ B(k,n). Blocking four p at a time amortizes C row
// traffic when n is narrow (attention value gradients have n <= 16).
template <typename S>
void mm_tn(const S* A, const S* B, S* C, int64_t m, int64_t k, int64_t n) {
    int64_t p = 0;
    for (; p + 4 <= k; p += 4) {
        const S* a0 = A + p * m;
        const S* a1 = a0 + m;
        const S* a2 = a1 + m;
        const S* a3 = a2 + m;
        const S* b0 = B + p * n;
        const S* b1 = b0 + n;
        const S* b2 = b1 + n;
        const S* b3 = b2 + n;
        for (int64_t i = 0; i < m; ++i) {
            const S s0 = a0[i], s1 = a1[i], s2 = a2[i], s3 = a3[i];
            S* c = C + i * n;
            for (int64_t j = 0; j < n; ++j)
                c[j] += s0 * b0[j] + s1 * b1[j] + s2 * b2[j] + s3 * b3[j];
        }
    }
    for (; p < k; ++p) {
        const S* a = A + p * m;
        const S* b = B + p * n;
        for (int64_t i = 0; i < m; ++i) {
            const S s = a[i];
            if (s == S(0)) continue;
            S* c = C + i * n;
            for (int64_t j = 0; j < n; ++j) c[j] += s * b[j];
        }
    }
}

// Gather SAME-padded patches of one (b,t) input plane into col, laid out as
// K = C*kh*kw rows of N = Ho*Wo contiguous columns. xc is the input channel
// stride (distance between channel planes of the same (b,t) slice).
template <typename S>
void im2col(const S* xin, int64_t C, int64_t xc, int64_t H, int64_t W, int64_t kh, int64_t kw,
            int64_t s, int64_t Ho, int64_t Wo, S* col) {
    const int64_t ph = kh / 2, pw = kw / 2, N = Ho * Wo;
    for (int64_t c = 0; c < C; ++c) {
        const S* xplane = xin + c * xc;
        for (int64_t ki = 0; ki < kh; ++ki) {
            for (int64_t kj = 0; kj < kw; ++kj) {
                S* row = col + ((c * kh + ki) * kw + kj) * N;
                const int64_t dh = ki - ph, dw = kj - pw;
                for (int64_t oh = 0; oh < Ho; ++oh) {
                    S* r = row + oh * Wo;
                    const int64_t ih = oh * s + dh;
                    if (ih < 0 || ih >= H) {
                        std::fill(r, r + Wo, S(0));
                        continue;
                    }
                    const int64_t lo = dw < 0 ? (-dw + s - 1) / s : 0;
                    const int64_t hi = W - 1 - dw < 0 ? lo : std::min(Wo, (W - 1 - dw) / s + 1);
                    const S* xrow = xplane + ih * W + dw;
                    for (int64_t ow = 0; ow < lo; ++ow) r[ow] = S(0);
                    if (s == 1) {
                        if (hi > lo) std::copy(xrow + lo, xrow + hi, r + lo);
                    } else {
                        for (int64_t ow = lo; ow < hi; ++ow) r[ow] = xrow[ow * s];
                    }
                    for (int64_t ow = hi; ow < Wo; ++ow) r[ow] = S(0);
                }
            }
        }
    }
}

// Scatter-add a col-layout gradient back onto one (b,t) input plane.
template <typename S>
void col2im_add(const S* col, int64_t C, int64_t xc, int64_t H, int64_t W, int64_t kh, int64_t kw,
                int64_t s, int64_t Ho, int64_t Wo, S* gxin) {
    const int64_t ph = kh / 2, pw = kw / 2, N = Ho * Wo;
    for (int64_t c = 0; c < C; ++c) {
        S* gplane = gxin + c * xc;
        for (int64_t ki = 0; ki < kh; ++ki) {
            for (int64_t kj = 0; kj < kw; ++kj) {
                const S* row = col + ((c * kh + ki) * kw + kj) * N;
                const int64_t dh = ki - ph, dw = kj - pw;
                for (int64_t oh = 0; oh < Ho; ++oh) {
                    const int64_t ih = oh * s + dh;
                    if (ih < 0 || ih >= H) continue;
                    const int64_t lo = dw < 0 ? (-dw + s - 1) / s : 0;
                    const int64_t hi = W - 1 - dw < 0 ? lo : std::min(Wo, (W - 1 - dw) / s + 1);
                    const S* r = row + oh * Wo;
                    S* gxrow = gplane + ih * W + dw;
                    if (s == 1) {
                        for (int64_t ow = lo; ow < hi; ++ow) gxrow[ow] += r[ow];
                    } else {
                        for (int64_t ow = lo; ow < hi; ++ow) gxrow[ow * s] += r[ow];
                    }
                }
            }
        }
    }
}

}  // namespace detail

// ---------- elementwise binary (broadcasting) ----------

enum class EwKind { add, sub, mul, div };

template <typename S>
Tensor<S> ewise(EwKind kind, const Tensor<S>& a, const Tensor<S>& b) {
    const char* name = kind == EwKind::add   ? "add"
                       : kind == EwKind::sub ? "sub"
                       : kind == EwKind::mul ? "mul"
                                             : "div";
    Shape oshape = detail::broadcast_shape(name, a.shape(), b.shape());
    auto sa = detail::bcast_strides(a.shape(), oshape);
    auto sb = detail::bcast_strides(b.shape(), oshape);
    std::vector<S> v(size_t(numel(oshape)));
    const S* pa = a.data();
    const S* pb = b.data();
    switch (kind) {
        case EwKind::add:
            detail::for_each_bcast(oshape, sa, sb,
                                   [&](int64_t io, int64_t ia, int64_t ib) { v[size_t(io)] = pa[ia] + pb[ib]; });
            break;
        case EwKind::sub:
            detail::for_each_bcast(oshape, sa, sb,
                                   [&](int64_t io, int64_t ia, int64_t ib) { v[size_t(io)] = pa[ia] - pb[ib]; });
            break;
        case EwKind::mul:
            detail::for_each_bcast(oshape, sa, sb,
                                   [&](int64_t io, int64_t ia, int64_t ib) { v[size_t(io)] = pa[ia] * pb[ib]; });
            break;
        case EwKind::div:
            detail::for_each_bcast(oshape, sa, sb,
                                   [&](int64_t io, int64_t ia, int64_t ib) { v[size_t(io)] = pa[ia] / pb[ib]; });
            break;
    }
    auto an = a.node(), bn = b.node();
    return detail::make_op<S>(name, oshape, std::move(v), {&a, &b}, [=](Node<S>* out) {
        Shape osh = out->shape;
        return [=]() {
            const std::vector<S>& g = out->grad;
            const bool need_a = an->requires_grad, need_b = bn->requires_grad;
            if (need_a) an->ensure_grad();
            if (need_b) bn->ensure_grad();
            S* ga = need_a ? an->grad.data() : nullptr;
            S* gb = need_b ? bn->grad.data() : nullptr;
            const S* va = an->val.data();
            const S* vb = bn->val.data();
            detail::for_each_bcast(osh, sa, sb, [&](int64_t io, int64_t ia, int64_t ib) {
                const S go = g[size_t(io)];
                switch (kind) {
                    case EwKind::add:
                        if (ga) ga[ia] += go;
                        if (gb) gb[ib] += go;
                        break;
                    case EwKind::sub:
                        if (ga) ga[ia] += go;
                        if (gb) gb[ib] -= go;
                        break;
                    case EwKind::mul:
                        if (ga) ga[ia] += go * vb[ib];
                        if (gb) gb[ib] += go * va[ia];
                        break;
                    case EwKind::div:
                        if (ga) ga[ia] += go / vb[ib];
                        if (gb) gb[ib] -= go * va[ia] / (vb[ib] * vb[ib]);
                        break;
                }
            });
        };
    });
}

template <typename S> Tensor<S> add(const Tensor<S>& a, const Tensor<S>& b) { return ewise(EwKind::add, a, b); }
template <typename S> Tensor<S> sub(const Tensor<S>& a, const Tensor<S>& b) { return ewise(EwKind::sub, a, b); }
template <typename S> Tensor<S> mul(const Tensor<S>& a, const Tensor<S>& b) { return ewise(EwKind::mul, a, b); }
template <typename S> Tensor<S> div(const Tensor<S>& a, const Tensor<S>& b) { return ewise(EwKind::div, a, b); }

// ---------- scalar / unary ----------

template <typename S>
Tensor<S> mul_scalar(const Tensor<S>& a, S s) {
    std::vector<S> v(a.val());
    for (S& x : v) x *= s;
    auto an = a.node();
    return detail::make_op<S>("mul_scalar", a.shape(), std::move(v), {&a}, [=](Node<S>* out) {
        return [=]() {
            auto& ga = an->ensure_grad();
            const auto& g = out->grad;
            for (size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * s;
        };
    });
}

template <typename S>
Tensor<S> add_scalar(const Tensor<S>& a, S s) {
    std::vector<S> v(a.val());
    for (S& x : v) x += s;
    auto an = a.node();
    return detail::make_op<S>("add_scalar", a.shape(), std::move(v), {&a}, [=](Node<S>* out) {
        return [=]() {
            auto& ga = an->ensure_grad();
            const auto& g = out->grad;
            for (size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
        };
    });
}

template <typename S>
Tensor<S> relu(const Tensor<S>& a) {
    std::vector<S> v(a.val());
    for (S& x : v) x = x > S(0) ? x : S(0);
    auto an = a.node();
    return detail::make_op<S>("relu", a.shape(), std::move(v), {&a}, [=](Node<S>* out) {
        return [=]() {
            auto& ga = an->ensure_grad();
            const auto& g = out->grad;
            const auto& x = an->val;
            for (size_t i = 0; i < g.size(); ++i)
                if (x[i] > S(0)) ga[i] += g[i];
        };
    });
}

template <typename S>
Tensor<S> sigmoid(const Tensor<S>& a) {
    std::vector<S> v(a.val());
    for (S& x : v) x = S(1) / (S(1) + std::exp(-x));
    auto an = a.node();
    return detail::make_op<S>("sigmoid", a.shape(), std::move(v), {&a}, [=](Node<S>* out) {
        return [=]() {
            auto& ga = an->ensure_grad();
            const auto& g = out->grad;
            const auto& y = out->val;
            for (size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * y[i] * (S(1) - y[i]);
        };
    });
}

// ---------- shape ops (explicit copies) ----------

template <typename S>
Tensor<S> reshape(const Tensor<S>& a, Shape shape) {
    // one extent may be -1 (inferred)
    int64_t known = 1, infer = -1;
    for (size_t i = 0; i < shape.size(); ++i) {
        if (shape[i] == -1) {
            if (infer >= 0) throw std::runtime_error("reshape: multiple -1 extents");
            infer = int64_t(i);
        } else {
            known *= shape[i];
        }
    }
    if (infer >= 0) shape[size_t(infer)] = a.size() / known;
    if (numel(shape) != a.size())
        throw std::runtime_error("reshape: cannot view " + shape_str(a.shape()) + " as " +
                                 shape_str(shape));
    std::vector<S> v(a.val());
    auto an = a.node();
    return detail::make_op<S>("reshape", std::move(shape), std::move(v), {&a}, [=](Node<S>* out) {
        return [=]() {
            auto& ga = an->ensure_grad();
            const auto& g = out->grad;
            for (size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
        };
    });
}

namespace detail {

// dst[i_out] = src[i_in] where out axis d reads src axis perm[d].
template <typename S>
void permute_copy(const S* src, const Shape& in_shape, const std::vector<int>& perm, S* dst,
                  bool accumulate_into_src_layout = false) {
    size_t r = in_shape.size();
    Shape out_shape(r);
    for (size_t d = 0; d < r; ++d) out_shape[d] = in_shape[size_t(perm[d])];
    std::vector<int64_t> in_strides(r, 1);
    for (size_t d = r - 1; d-- > 0;) in_strides[d] = in_strides[d + 1] * in_shape[d + 1];
    std::vector<int64_t> strides(r);  // stride in src per out axis
    for (size_t d = 0; d < r; ++d) strides[d] = in_strides[size_t(perm[d])];

    std::vector<int64_t> idx(r, 0);
    int64_t total = numel(out_shape);
    int64_t src_off = 0;
    for (int64_t io = 0; io < total; ++io) {
        if (accumulate_into_src_layout)
            const_cast<S*>(src)[src_off] += dst[io];
        else
            dst[io] = src[src_off];
        for (size_t d = r; d-- > 0;) {
            ++idx[d];
            src_off += strides[d];
            if (idx[d] < out_shape[d]) break;
            idx[d] = 0;
            src_off -= strides[d] * out_shape[d];
        }
    }
}

}  // namespace detail

template <typename S>
Tensor<S> permute(const Tensor<S>& a, std::vector<int> perm) {
    if (perm.size() != size_t(a.rank())) throw std::runtime_error("permute: rank mismatch");
    Shape oshape(perm.size());
    for (size_t d = 0; d < perm.size(); ++d) oshape[d] = a.shape()[size_t(perm[d])];
    std::vector<S> v(size_t(a.size()));
    detail::permute_copy(a.data(), a.shape(), perm, v.data());
    auto an = a.node();
    return detail::make_op<S>("permute", std::move(oshape), std::move(v), {&a}, [=](Node<S>* out) {
        return [=]() {
            auto& ga = an->ensure_grad();
            // scatter: grad of input at src_off accumulates out->grad at io
            detail::permute_copy<S>(ga.data(), an->shape, perm,
                                    const_cast<S*>(out->grad.data()), true);
        };
    });
}

// ---------- matmul ----------

// Logical product of rank-2 or rank-3 (batched) operands. transpose flags
// interpret the stored layout; (ta && tb) is unsupported (never needed).
template <typename S>
Tensor<S> matmul(const Tensor<S>& a, const Tensor<S>& b, bool ta = false, bool tb = false) {
    if (ta && tb) throw std::runtime_error("matmul: ta && tb unsupported");
    int ra = a.rank(), rb = b.rank();
    if (ra != rb || (ra != 2 && ra != 3))
        throw std::runtime_error("matmul: operands must both be rank 2 or rank 3, got " +
                                 shape_str(a.shape()) + " @ " + shape_str(b.shape()));
    int64_t batch = ra == 3 ? a.shape()[0] : 1;
    if (ra == 3 && b.shape()[0] != batch) throw std::runtime_error("matmul: batch mismatch");
    size_t off = ra == 3 ? 1 : 0;
    int64_t m = ta ? a.shape()[off + 1] : a.shape()[off];
    int64_t ka = ta ? a.shape()[off] : a.shape()[off + 1];
    int64_t kb = tb ? b.shape()[off + 1] : b.shape()[off];
    int64_t n = tb ? b.shape()[off] : b.shape()[off + 1];
    if (ka != kb)
        throw std::runtime_error("matmul: inner extents disagree: " + shape_str(a.shape()) +
                                 (ta ? "^T" : "") + " @ " + shape_str(b.shape()) + (tb ? "^T" : ""));
    const int64_t k = ka;
    Shape oshape = ra == 3 ? Shape{batch, m, n} : Shape{m, n};
    std::vector<S> v(size_t(numel(oshape)), S(0));
    const int64_t as = m * k, bs = k * n, cs = m * n;
    for (int64_t bi = 0; bi < batch; ++bi) {
        const S* A = a.data() + bi * as;
        const S* B = b.data() + bi * bs;
        S* C = v.data() + bi * cs;
        if (!ta && !tb)
            detail::mm_nn(A, B, C, m, k, n);
        else if (!ta && tb)
            detail::mm_nt(A, B, C, m, k, n);
        else
            detail::mm_tn(A, B, C, m, k, n);
    }
    auto an = a.node(), bn = b.node();
    return detail::make_op<S>("matmul", std::move(oshape), std::move(v), {&a, &b}, [=](Node<S>* out) {
        return [=]() {
            const S* G = out->grad.data();
            for (int64_t bi = 0; bi < batch; ++bi) {
                const S* A = an->val.data() + bi * as;
                const S* B = bn->val.data() + bi * bs;
                const S* Gb = G + bi * cs;
                if (an->requires_grad) {
                    S* dA = an->ensure_grad().data() + bi * as;
                    if (!ta && !tb)
                        detail::mm_nt(Gb, B, dA, m, n, k);   // dA(m,k) += G(m,n) B(k,n)^T
                    else if (!ta && tb)
                        detail::mm_nn(Gb, B, dA, m, n, k);   // dA(m,k) += G(m,n) B(n,k)
                    else
                        detail::mm_nt(B, Gb, dA, k, n, m);   // dA(k,m) += B(k,n) G(m,n)^T
                }
                if (bn->requires_grad) {
                    S* dB = bn->ensure_grad().data() + bi * bs;
                    if (!ta && !tb)
                        detail::mm_tn(A, Gb, dB, k, m, n);   // dB(k,n) += A(m,k)^T G(m,n)
                    else if (!ta && tb)
                        detail::mm_tn(Gb, A, dB, n, m, k);   // dB(n,k) += G(m,n)^T A(m,k)
                    else
                        detail::mm_nn(A, Gb, dB, k, m, n);   // dB(k,n) += A(k,m) G(m,n)
                }
            }
        };
    });
}

// ---------- softmax over the last axis ----------

template <typename S>
Tensor<S> softmax_lastdim(const Tensor<S>& a) {
    if (a.rank() < 1 || a.shape().back() < 1)
        throw std::runtime_error("softmax_lastdim: empty last axis");
    const int64_t L = a.shape().back();
    const int64_t rows = a.size() / L;
    std::vector<S> v(size_t(a.size()));
    const S* x = a.data();
    for (int64_t r = 0; r < rows; ++r) {
        const S* xr = x + r * L;
        S* yr = v.data() + r * L;
        S mx = xr[0];
        for (int64_t i = 1; i < L; ++i) mx = std::max(mx, xr[i]);
        S sum = S(0);
        for (int64_t i = 0; i < L; ++i) {
            yr[i] = std::exp(xr[i] - mx);
            sum += yr[i];
        }
        const S inv = S(1) / sum;
        for (int64_t i = 0; i < L; ++i) yr[i] *= inv;
    }
    auto an = a.node();
    return detail::make_op<S>("softmax_lastdim", a.shape(), std::move(v), {&a}, [=](Node<S>* out) {
        return [=]() {
            auto& ga = an->ensure_grad();
            const auto& g = out->grad;
            const auto& y = out->val;
            for (int64_t r = 0; r < rows; ++r) {
                const S* gr = g.data() + r * L;
                const S* yr = y.data() + r * L;
                S dot = S(0);
                for (int64_t i = 0; i < L; ++i) dot += gr[i] * yr[i];
                S* gar = ga.data() + r * L;
                for (int64_t i = 0; i < L; ++i) gar[i] += yr[i] * (gr[i] - dot);
            }
        };
    });
}

// ---------- layer normalization over one axis ----------

// Normalizes across axis `axis` independently at every other position, then
// applies gamma/beta (extent = that axis). Default axis: 1 for rank >= 2
// (the channel axis of B×C×... tensors), else 0.
template <typename S>
Tensor<S> layer_norm(const Tensor<S>& x, const Tensor<S>& gamma, const Tensor<S>& beta,
                     S eps = S(1e-5), int axis = -1) {
    if (axis < 0) axis = x.rank() >= 2 ? 1 : 0;
    const int64_t C = x.shape()[size_t(axis)];
    if (gamma.size() != C || beta.size() != C)
        throw std::runtime_error("layer_norm: gamma/beta extent must equal the normalized axis");
    int64_t outer = 1, inner = 1;
    for (int d = 0; d < axis; ++d) outer *= x.shape()[size_t(d)];
    for (int d = axis + 1; d < x.rank(); ++d) inner *= x.shape()[size_t(d)];

    std::vector<S> v(size_t(x.size()));
    const S* px = x.data();
    const S* pg = gamma.data();
    const S* pb = beta.data();
    for (int64_t o = 0; o < outer; ++o) {
        for (int64_t i = 0; i < inner; ++i) {
            const int64_t base = o * C * inner + i;
            S mean = S(0);
            for (int64_t c = 0; c < C; ++c) mean += px[base + c * inner];
            mean /= S(C);
            S var = S(0);
            for (int64_t c = 0; c < C; ++c) {
                const S d = px[base + c * inner] - mean;
                var += d * d;
            }
            var /= S(C);
            const S inv = S(1) / std::sqrt(var + eps);
            for (int64_t c = 0; c < C; ++c) {
                const S xh = (px[base + c * inner] - mean) * inv;
                v[size_t(base + c * inner)] = pg[c] * xh + pb[c];
            }
        }
    }
    auto xn = x.node(), gn = gamma.node(), bn = beta.node();
    return detail::make_op<S>("layer_norm", x.shape(), std::move(v), {&x, &gamma, &beta},
                              [=](Node<S>* out) {
        return [=]() {
            const auto& g = out->grad;
            const S* px2 = xn->val.data();
            const S* pg2 = gn->val.data();
            S* gx = xn->requires_grad ? xn->ensure_grad().data() : nullptr;
            S* gg = gn->requires_grad ? gn->ensure_grad().data() : nullptr;
            S* gb = bn->requires_grad ? bn->ensure_grad().data() : nullptr;
            std::vector<S> xh(static_cast<size_t>(C)), h(static_cast<size_t>(C));
            for (int64_t o = 0; o < outer; ++o) {
                for (int64_t i = 0; i < inner; ++i) {
                    const int64_t base = o * C * inner + i;
                    S mean = S(0);
                    for (int64_t c = 0; c < C; ++c) mean += px2[base + c * inner];
                    mean /= S(C);
                    S var = S(0);
                    for (int64_t c = 0; c < C; ++c) {
                        const S d = px2[base + c * inner] - mean;
                        var += d * d;
                    }
                    var /= S(C);
                    const S inv = S(1) / std::sqrt(var + eps);
                    S sum_h = S(0), sum_hx = S(0);
                    for (int64_t c = 0; c < C; ++c) {
                        const S go = g[size_t(base + c * inner)];
                        xh[size_t(c)] = (px2[base + c * inner] - mean) * inv;
                        h[size_t(c)] = go * pg2[c];
                        sum_h += h[size_t(c)];
                        sum_hx += h[size_t(c)] * xh[size_t(c)];
                        if (gg) gg[c] += go * xh[size_t(c)];
                        if (gb) gb[c] += go;
                    }
                    if (gx) {
                        for (int64_t c = 0; c < C; ++c)
                            gx[base + c * inner] +=
                                inv * (h[size_t(c)] - sum_h / S(C) - xh[size_t(c)] * sum_hx / S(C));
                    }
                }
            }
        };
    });
}

// ---------- convolutions ----------

// 2-D convolution with SAME padding (odd kernels) over the trailing (H, W)
// axes. Accepts rank-4 (N,C,H,W) or rank-5 (B,C,T,H,W) input; rank-5 applies
// the kernel per frame. Weight layout (O,C,kh,kw); bias optional (extent O).
template <typename S>
Tensor<S> conv2d(const Tensor<S>& x, const Tensor<S>& w, const Tensor<S>& bias, int stride = 1) {
    const int r = x.rank();
    if (r != 4 && r != 5) throw std::runtime_error("conv2d: input must be rank 4 or 5");
    if (w.rank() != 4) throw std::runtime_error("conv2d: weight must be (O,C,kh,kw)");
    const int64_t O = w.shape()[0], Cw = w.shape()[1], kh = w.shape()[2], kw = w.shape()[3];
    if (kh % 2 == 0 || kw % 2 == 0) throw std::runtime_error("conv2d: kernel extents must be odd");
    const int64_t C = x.shape()[1];
    if (C != Cw) throw std::runtime_error("conv2d: channel mismatch");
    if (bias.defined() && bias.size() != O) throw std::runtime_error("conv2d: bias extent != O");
    const int64_t H = x.shape()[size_t(r - 2)], W = x.shape()[size_t(r - 1)];
    const int64_t ph = kh / 2, pw = kw / 2, s = stride;
    const int64_t Ho = (H + 2 * ph - kh) / s + 1;
    const int64_t Wo = (W + 2 * pw - kw) / s + 1;
    const int64_t B = x.shape()[0];
    const int64_t T = r == 5 ? x.shape()[2] : 1;

    Shape oshape = r == 5 ? Shape{B, O, T, Ho, Wo} : Shape{B, O, Ho, Wo};
    std::vector<S> v(size_t(numel(oshape)), S(0));

    // index helpers: base offset of (plane, channel) row-0 for input / output
    const int64_t xc = r == 5 ? T * H * W : H * W;      // input channel stride
    const int64_t oc = r == 5 ? T * Ho * Wo : Ho * Wo;  // output channel stride
    auto xbase = [=](int64_t b, int64_t t) { return r == 5 ? (b * C * T + t) * H * W : b * C * H * W; };
    auto obase = [=](int64_t b, int64_t t) { return r == 5 ? (b * O * T + t) * Ho * Wo : b * O * Ho * Wo; };

    const S* px = x.data();
    const S* pw_ = w.data();
    const int64_t K = C * kh * kw, N = Ho * Wo;
    {
        std::vector<S> col(static_cast<size_t>(K * N));
        for (int64_t b = 0; b < B; ++b) {
            for (int64_t t = 0; t < T; ++t) {
                detail::im2col(px + xbase(b, t), C, xc, H, W, kh, kw, s, Ho, Wo, col.data());
                S* vout = v.data() + obase(b, t);
                for (int64_t o = 0; o < O; ++o) {
                    S* crow = vout + o * oc;
                    const S bv = bias.defined() ? bias.data()[o] : S(0);
                    std::fill(crow, crow + N, bv);
                    const S* wrow = pw_ + o * K;
                    for (int64_t p = 0; p < K; ++p) {
                        const S wv = wrow[p];
                        if (wv == S(0)) continue;
                        const S* colrow = col.data() + p * N;
                        for (int64_t j = 0; j < N; ++j) crow[j] += wv * colrow[j];
                    }
                }
            }
        }
    }

    auto xn = x.node(), wn = w.node(), bn2 = bias.defined() ? bias.node() : nullptr;
    return detail::make_op<S>("conv2d", std::move(oshape), std::move(v), {&x, &w, &bias},
                              [=](Node<S>* out) {
        return [=]() {
            const S* G = out->grad.data();
            const S* px2 = xn->val.data();
            const S* pw2 = wn->val.data();
            S* gx = xn->requires_grad ? xn->ensure_grad().data() : nullptr;
            S* gw = wn->requires_grad ? wn->ensure_grad().data() : nullptr;
            S* gb = (bn2 && bn2->requires_grad) ? bn2->ensure_grad().data() : nullptr;
            std::vector<S> col(gw ? static_cast<size_t>(K * N) : size_t(0));
            std::vector<S> colg(gx ? static_cast<size_t>(K * N) : size_t(0));
            for (int64_t b = 0; b < B; ++b) {
                for (int64_t t = 0; t < T; ++t) {
                    const int64_t xb = xbase(b, t), ob = obase(b, t);
                    const S* gout = G + ob;
                    if (gb) {
                        for (int64_t o = 0; o < O; ++o) {
                            const S* grow = gout + o * oc;
                            S s0 = S(0);
                            for (int64_t j = 0; j < N; ++j) s0 += grow[j];
                            gb[o] += s0;
                        }
                    }
                    if (gw) {
                        // gw(O,K) += G(O,N) @ col(K,N)^T
                        detail::im2col(px2 + xb, C, xc, H, W, kh, kw, s, Ho, Wo, col.data());
                        for (int64_t o = 0; o < O; ++o) {
                            const S* grow = gout + o * oc;
                            S* gwrow = gw + o * K;
                            for (int64_t p = 0; p < K; ++p)
                                gwrow[p] += detail::dot(grow, col.data() + p * N, N);
                        }
                    }
                    if (gx) {
                        // colg(K,N) = W(O,K)^T @ G(O,N), then scatter back onto the plane
                        std::fill(colg.begin(), colg.end(), S(0));
                        for (int64_t o = 0; o < O; ++o) {
                            const S* grow = gout + o * oc;
                            const S* wrow = pw2 + o * K;
                            for (int64_t p = 0; p < K; ++p) {
                                const S wv = wrow[p];
                                if (wv == S(0)) continue;
                                S* cr = colg.data() + p * N;
                                for (int64_t j = 0; j < N; ++j) cr[j] += wv * grow[j];
                            }
                        }
                        detail::col2im_add(colg.data(), C, xc, H, W, kh, kw, s, Ho, Wo, gx + xb);
                    }
                }
            }
        };
    });
}

// 3-D convolution, SAME padding, stride 1, over (T,H,W) of a B×C×T×H×W map.
// depthwise=false: weight (O,C,kt,kh,kw). depthwise=true: weight (C,kt,kh,kw),
// each channel convolved independently (out channels == in channels).
template <typename S>
Tensor<S> conv3d(const Tensor<S>& x, const Tensor<S>& w, const Tensor<S>& bias,
                 bool depthwise = false, int stride = 1) {
    if (stride != 1) throw std::runtime_error("conv3d: only stride 1 is supported");
    if (x.rank() != 5) throw std::runtime_error("conv3d: input must be B×C×T×H×W");
    const int64_t B = x.shape()[0], C = x.shape()[1], T = x.shape()[2], H = x.shape()[3],
                  W = x.shape()[4];
    int64_t O, kt, kh, kw;
    if (depthwise) {
        if (w.rank() != 4 || w.shape()[0] != C)
            throw std::runtime_error("conv3d depthwise: weight must be (C,kt,kh,kw) with matching C");
        O = C, kt = w.shape()[1], kh = w.shape()[2], kw = w.shape()[3];
    } else {
        if (w.rank() != 5 || w.shape()[1] != C)
            throw std::runtime_error("conv3d: weight must be (O,C,kt,kh,kw) with matching C");
        O = w.shape()[0], kt = w.shape()[2], kh = w.shape()[3], kw = w.shape()[4];
    }
    if (kt % 2 == 0 || kh % 2 == 0 || kw % 2 == 0)
        throw std::runtime_error("conv3d: kernel extents must be odd");
    if (bias.defined() && bias.size() != O) throw std::runtime_error("conv3d: bias extent != O");
    const int64_t pt = kt / 2, ph = kh / 2, pw = kw / 2;

    Shape oshape{B, O, T, H, W};
    std::vector<S> v(size_t(numel(oshape)), S(0));
    const int64_t plane = H * W, chan = T * plane;

    const S* px = x.data();
    const S* pwt = w.data();
    auto run_fwd = [&](int64_t b, int64_t o, int64_t c, const S* wk) {
        // wk points at (kt,kh,kw) block for (o,c)
        const S* xin = px + (b * C + c) * chan;
        S* vout = v.data() + (b * O + o) * chan;
        for (int64_t ki = 0; ki < kt; ++ki) {
            const int64_t dt = ki - pt;
            for (int64_t kj = 0; kj < kh; ++kj) {
                const int64_t dh = kj - ph;
                for (int64_t kk = 0; kk < kw; ++kk) {
                    const S wv = wk[(ki * kh + kj) * kw + kk];
                    if (wv == S(0)) continue;
                    const int64_t dw = kk - pw;
                    for (int64_t t = std::max<int64_t>(0, -dt); t < std::min(T, T - dt); ++t) {
                        for (int64_t h = std::max<int64_t>(0, -dh); h < std::min(H, H - dh); ++h) {
                            const int64_t lo = std::max<int64_t>(0, -dw);
                            const int64_t hi = std::min(W, W - dw);
                            S* orow = vout + (t * H + h) * W;
                            const S* xrow = xin + ((t + dt) * H + (h + dh)) * W + dw;
                            for (int64_t ww = lo; ww < hi; ++ww) orow[ww] += wv * xrow[ww];
                        }
                    }
                }
            }
        }
    };
    for (int64_t b = 0; b < B; ++b) {
        for (int64_t o = 0; o < O; ++o) {
            if (bias.defined()) {
                S* vout = v.data() + (b * O + o) * chan;
                const S bv = bias.data()[o];
                for (int64_t i = 0; i < chan; ++i) vout[i] = bv;
            }
            if (depthwise)
                run_fwd(b, o, o, pwt + o * kt * kh * kw);
            else
                for (int64_t c = 0; c < C; ++c) run_fwd(b, o, c, pwt + ((o * C + c) * kt * kh) * kw);
        }
    }

    auto xn = x.node(), wn = w.node(), bn2 = bias.defined() ? bias.node() : nullptr;
    return detail::make_op<S>("conv3d", std::move(oshape), std::move(v), {&x, &w, &bias},
                              [=](Node<S>* out) {
        return [=]() {
            const S* G = out->grad.data();
            const S* px2 = xn->val.data();
            const S* pw2 = wn->val.data();
            S* gx = xn->requires_grad ? xn->ensure_grad().data() : nullptr;
            S* gw = wn->requires_grad ? wn->ensure_grad().data() : nullptr;
            S* gb = (bn2 && bn2->requires_grad) ? bn2->ensure_grad().data() : nullptr;
            auto run_bwd = [&](int64_t b, int64_t o, int64_t c, const S* wk, S* gwk) {
                const S* xin = px2 + (b * C + c) * chan;
                S* gxin = gx ? gx + (b * C + c) * chan : nullptr;
                const S* grow0 = G + (b * O + o) * chan;
                for (int64_t ki = 0; ki < kt; ++ki) {
                    const int64_t dt = ki - pt;
                    for (int64_t kj = 0; kj < kh; ++kj) {
                        const int64_t dh = kj - ph;
                        for (int64_t kk = 0; kk < kw; ++kk) {
                            const int64_t dw = kk - pw;
                            const S wv = wk[(ki * kh + kj) * kw + kk];
                            S wacc = S(0);
                            for (int64_t t = std::max<int64_t>(0, -dt); t < std::min(T, T - dt); ++t) {
                                for (int64_t h = std::max<int64_t>(0, -dh); h < std::min(H, H - dh);
                                     ++h) {
                                    const int64_t lo = std::max<int64_t>(0, -dw);
                                    const int64_t hi = std::min(W, W - dw);
                                    const S* grow = grow0 + (t * H + h) * W;
                                    const S* xrow = xin + ((t + dt) * H + (h + dh)) * W + dw;
                                    if (gwk)
                                        for (int64_t ww = lo; ww < hi; ++ww)
                                            wacc += grow[ww] * xrow[ww];
                                    if (gxin) {
                                        S* gxrow = gxin + ((t + dt) * H + (h + dh)) * W + dw;
                                        for (int64_t ww = lo; ww < hi; ++ww)
                                            gxrow[ww] += wv * grow[ww];
                                    }
                                }
                            }
                            if (gwk) gwk[(ki * kh + kj) * kw + kk] += wacc;
                        }
                    }
                }
            };
            for (int64_t b = 0; b < B; ++b) {
                for (int64_t o = 0; o < O; ++o) {
                    if (gb) {
                        const S* grow0 = G + (b * O + o) * chan;
                        S s0 = S(0);
                        for (int64_t i = 0; i < chan; ++i) s0 += grow0[i];
                        gb[o] += s0;
                    }
                    if (depthwise) {
                        run_bwd(b, o, o, pw2 + o * kt * kh * kw, gw ? gw + o * kt * kh * kw : nullptr);
                    } else {
                        for (int64_t c = 0; c < C; ++c)
                            run_bwd(b, o, c, pw2 + ((o * C + c) * kt * kh) * kw,
                                    gw ? gw + ((o * C + c) * kt * kh) * kw : nullptr);
                    }
                }
            }
        };
    });
}

// ---------- bilinear upsampling ----------

// Resizes the trailing (H, W) axes with half-pixel centers (align_corners =
// false). All leading axes are treated as independent planes. Exact identity
// when the size is unchanged; preserves constant fields.
template <typename S>
Tensor<S> upsample_bilinear(const Tensor<S>& x, int64_t oh, int64_t ow) {
    if (x.rank() < 2) throw std::runtime_error("upsample_bilinear: rank must be >= 2");
    if (oh < 1 || ow < 1) throw std::runtime_error("upsample_bilinear: target extents must be >= 1");
    const int64_t H = x.shape()[size_t(x.rank() - 2)], W = x.shape()[size_t(x.rank() - 1)];
    const int64_t planes = x.size() / (H * W);
    Shape oshape = x.shape();
    oshape[size_t(x.rank() - 2)] = oh;
    oshape[size_t(x.rank() - 1)] = ow;

    // precomputed source indices/weights per output coordinate
    auto make_table = [](int64_t in, int64_t out, std::vector<int64_t>& i0, std::vector<int64_t>& i1,
                         std::vector<S>& f) {
        i0.resize(size_t(out));
        i1.resize(size_t(out));
        f.resize(size_t(out));
        const double scale = double(in) / double(out);
        for (int64_t o = 0; o < out; ++o) {
            double src = (double(o) + 0.5) * scale - 0.5;
            if (src < 0) src = 0;
            int64_t lo = std::min<int64_t>(int64_t(src), in - 1);
            i0[size_t(o)] = lo;
            i1[size_t(o)] = std::min(lo + 1, in - 1);
            f[size_t(o)] = S(src - double(lo));
        }
    };
    std::vector<int64_t> h0, h1, w0, w1;
    std::vector<S> fh, fw;
    make_table(H, oh, h0, h1, fh);
    make_table(W, ow, w0, w1, fw);

    std::vector<S> v(size_t(planes * oh * ow));
    const S* px = x.data();
    for (int64_t p = 0; p < planes; ++p) {
        const S* in = px + p * H * W;
        S* outp = v.data() + p * oh * ow;
        for (int64_t i = 0; i < oh; ++i) {
            const S* r0 = in + h0[size_t(i)] * W;
            const S* r1 = in + h1[size_t(i)] * W;
            const S f1 = fh[size_t(i)], f0 = S(1) - f1;
            S* orow = outp + i * ow;
            for (int64_t j = 0; j < ow; ++j) {
                const S g1 = fw[size_t(j)], g0 = S(1) - g1;
                const int64_t a = w0[size_t(j)], b = w1[size_t(j)];
                orow[j] = f0 * (g0 * r0[a] + g1 * r0[b]) + f1 * (g0 * r1[a] + g1 * r1[b]);
            }
        }
    }
    auto xn = x.node();
    return detail::make_op<S>("upsample_bilinear", std::move(oshape), std::move(v), {&x},
                              [=](Node<S>* out) {
        return [=]() {
            auto& gx = xn->ensure_grad();
            const auto& g = out->grad;
            for (int64_t p = 0; p < planes; ++p) {
                S* gin = gx.data() + p * H * W;
                const S* gout = g.data() + p * oh * ow;
                for (int64_t i = 0; i < oh; ++i) {
                    const S f1 = fh[size_t(i)], f0 = S(1) - f1;
                    S* r0 = gin + h0[size_t(i)] * W;
                    S* r1 = gin + h1[size_t(i)] * W;
                    const S* grow = gout + i * ow;
                    for (int64_t j = 0; j < ow; ++j) {
                        const S g1 = fw[size_t(j)], g0 = S(1) - g1;
                        const int64_t a = w0[size_t(j)], b = w1[size_t(j)];
                        const S go = grow[j];
                        r0[a] += f0 * g0 * go;
                        r0[b] += f0 * g1 * go;
                        r1[a] += f1 * g0 * go;
                        r1[b] += f1 * g1 * go;
                    }
                }
            }
        };
    });
}

// ---------- reductions ----------

// Mean over the trailing k axes, keeping them as size-1 (e.g. global average
// pooling: k=2 maps B×C×T×H×W → B×C×T×1×1, k=3 → B×C×1×1×1).
template <typename S>
Tensor<S> mean_trailing(const Tensor<S>& x, int k) {
    if (k < 1 || k >= x.rank() + 1) throw std::runtime_error("mean_trailing: bad axis count");
    int64_t M = 1;
    Shape oshape = x.shape();
    for (int d = 0; d < k; ++d) {
        M *= x.shape()[size_t(x.rank() - 1 - d)];
        oshape[size_t(x.rank() - 1 - d)] = 1;
    }
    const int64_t groups = x.size() / M;
    std::vector<S> v(static_cast<size_t>(groups));
    const S* px = x.data();
    for (int64_t gI = 0; gI < groups; ++gI) {
        S s = S(0);
        const S* p = px + gI * M;
        for (int64_t i = 0; i < M; ++i) s += p[i];
        v[size_t(gI)] = s / S(M);
    }
    auto xn = x.node();
    return detail::make_op<S>("mean_trailing", std::move(oshape), std::move(v), {&x},
                              [=](Node<S>* out) {
        return [=]() {
            auto& gx = xn->ensure_grad();
            const auto& g = out->grad;
            for (int64_t gI = 0; gI < groups; ++gI) {
                const S go = g[size_t(gI)] / S(M);
                S* p = gx.data() + gI * M;
                for (int64_t i = 0; i < M; ++i) p[i] += go;
            }
        };
    });
}

// Global average pool over H,W: B×C×T×H×W → B×C×T×1×1.
template <typename S>
Tensor<S> global_avg_pool(const Tensor<S>& x) {
    if (x.rank() != 5) throw std::runtime_error("global_avg_pool: input must be B×C×T×H×W");
    return mean_trailing(x, 2);
}

template <typename S>
Tensor<S> sum_all(const Tensor<S>& x) {
    S s = S(0);
    for (const S v : x.val()) s += v;
    std::vector<S> v{s};
    auto xn = x.node();
    return detail::make_op<S>("sum_all", Shape{1}, std::move(v), {&x}, [=](Node<S>* out) {
        return [=]() {
            auto& gx = xn->ensure_grad();
            const S go = out->grad[0];
            for (S& g : gx) g += go;
        };
    });
}

template <typename S>
Tensor<S> mean_all(const Tensor<S>& x) {
    return mul_scalar(sum_all(x), S(1) / S(x.size()));
}

// ---------- linear / mlp ----------

// Affine map over the last axis: x (..., in) @ W (in, out) + b.
template <typename S>
Tensor<S> linear(const Tensor<S>& x, const Tensor<S>& w, const Tensor<S>& b) {
    if (w.rank() != 2) throw std::runtime_error("linear: weight must be rank 2");
    const int64_t in = w.shape()[0], out_f = w.shape()[1];
    if (x.shape().back() != in)
        throw std::runtime_error("linear: input last extent " + std::to_string(x.shape().back()) +
                                 " != weight in extent " + std::to_string(in));
    Shape lead(x.shape().begin(), x.shape().end() - 1);
    Tensor<S> x2 = reshape(x, {-1, in});
    Tensor<S> y = matmul(x2, w);
    if (b.defined()) y = add(y, b);
    Shape oshape = lead;
    oshape.push_back(out_f);
    return reshape(y, std::move(oshape));
}

// ---------- stable binary cross-entropy with logits (mean) ----------

template <typename S>
Tensor<S> bce_with_logits(const Tensor<S>& logits, const Tensor<S>& targets) {
    if (logits.shape() != targets.shape())
        throw std::runtime_error("bce_with_logits: shape mismatch " + shape_str(logits.shape()) +
                                 " vs " + shape_str(targets.shape()));
    const int64_t N = logits.size();
    const S* x = logits.data();
    const S* z = targets.data();
    S total = S(0);
    for (int64_t i = 0; i < N; ++i) {
        const S xi = x[i];
        total += std::max(xi, S(0)) - xi * z[i] + std::log1p(std::exp(-std::abs(xi)));
    }
    std::vector<S> v{total / S(N)};
    auto xn = logits.node(), zn = targets.node();
    return detail::make_op<S>("bce_with_logits", Shape{1}, std::move(v), {&logits, &targets},
                              [=](Node<S>* out) {
        return [=]() {
            const S go = out->grad[0] / S(N);
            const S* x2 = xn->val.data();
            const S* z2 = zn->val.data();
            if (xn->requires_grad) {
                auto& gx = xn->ensure_grad();
                for (int64_t i = 0; i < N; ++i) {
                    const S sig = S(1) / (S(1) + std::exp(-x2[i]));
                    gx[i] += go * (sig - z2[i]);
                }
            }
            if (zn->requires_grad) {
                auto& gz = zn->ensure_grad();
                for (int64_t i = 0; i < N; ++i) gz[i] += go * (-x2[i]);
            }
        };
    });
}

// ---------- parameter initialization ----------

template <typename S>
void fill_uniform(Tensor<S>& t, double lo, double hi, Rng& rng) {
    for (S& v : t.val()) v = S(rng.uniform(lo, hi));
}

// fan-in-scaled uniform: U(-1/sqrt(fan_in), 1/sqrt(fan_in))
template <typename S>
void init_fan_in(Tensor<S>& t, int64_t fan_in, Rng& rng) {
    const double bound = 1.0 / std::sqrt(double(fan_in));
    fill_uniform(t, -bound, bound, rng);
}

}  // namespace sdavs
