// Copyright (c) 2026 the qglab authors
// SPDX-License-Identifier: Apache-2.0
//
// The recorded op set: matmul, add, mul, scale, softmax (plus a fused masked
// variant for attention), layer_norm, embedding gather, GELU, cross-entropy,
// transpose and sum. Each op computes its output eagerly through the kernels
// and, when a tape is supplied and an input requires gradients, records a
// closure that accumulates input gradients from the output gradient.
//
// Passing tape == nullptr runs the same forward math without recording
// (used for decoding and finite-difference probes).

#pragma once

#include <memory>

#include "qglab/kernels.h"
#include "qglab/tensor.h"

namespace qglab::ops {

using i64 = std::int64_t;

namespace detail {

template <class S>
TensorT<S> make_out(Tape<S>* tape, Shape shape,
                    std::initializer_list<const TensorT<S>*> inputs) {
    TensorT<S> out(std::move(shape));
    if (tape) {
        for (const auto* t : inputs) {
            if (t->requires_grad()) {
                out.enable_grad();
                break;
            }
        }
    }
    return out;
}

inline i64 leading(const Shape& s, std::size_t upto) {
    i64 n = 1;
    for (std::size_t i = 0; i < upto; ++i) n *= s[i];
    return n;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// matmul. Two layouts are supported:
//   - b has rank 2: a's leading dims are flattened into rows ([..., k] x [k, n]);
//     transpose flags apply to the 2-D views (ta requires a of rank 2).
//   - a and b have equal rank >= 3: batched over the shared leading dims.
// ---------------------------------------------------------------------------
template <class S>
TensorT<S> matmul(Tape<S>* tape, const TensorT<S>& a, const TensorT<S>& b,
                  bool ta = false, bool tb = false) {
    const Shape& as = a.shape();
    const Shape& bs = b.shape();

    if (bs.size() == 2 && as.size() >= 2) {
        if (ta && as.size() != 2) {
            throw std::invalid_argument("matmul: transpose of a requires rank 2");
        }
        const i64 m = ta ? as[1] : detail::leading(as, as.size() - 1);
        const i64 k = ta ? as[0] : as.back();
        const i64 kb = tb ? bs[1] : bs[0];
        const i64 n = tb ? bs[0] : bs[1];
        if (k != kb) {
            throw std::invalid_argument("matmul: inner dims disagree, " +
                                        shape_str(as) + " x " + shape_str(bs));
        }
        Shape out_shape;
        if (ta) {
            out_shape = {m, n};
        } else {
            out_shape.assign(as.begin(), as.end() - 1);
            out_shape.push_back(n);
        }
        TensorT<S> out = detail::make_out(tape, std::move(out_shape), {&a, &b});
        kernels::matmul(a.data(), b.data(), out.data(), m, n, k, ta, tb, false);
        if (out.requires_grad()) {
            tape->record([a, b, out, m, n, k, ta, tb]() mutable {
                const S* dc = out.grad();
                if (a.requires_grad()) {
                    if (!ta) {
                        kernels::matmul(dc, b.data(), a.grad(), m, k, n,
                                        false, !tb, true);
                    } else {
                        kernels::matmul(b.data(), dc, a.grad(), k, m, n,
                                        tb, true, true);
                    }
                }
                if (b.requires_grad()) {
                    if (!tb) {
                        kernels::matmul(a.data(), dc, b.grad(), k, n, m,
                                        !ta, false, true);
                    } else {
                        kernels::matmul(dc, a.data(), b.grad(), n, k, m,
                                        true, ta, true);
                    }
                }
            });
        }
        return out;
    }

    if (as.size() == bs.size() && as.size() >= 3) {
        const std::size_t r = as.size();
        for (std::size_t i = 0; i + 2 < r; ++i) {
            if (as[i] != bs[i]) {
                throw std::invalid_argument("matmul: batch dims disagree, " +
                                            shape_str(as) + " x " + shape_str(bs));
            }
        }
        const i64 batch = detail::leading(as, r - 2);
        const i64 m = ta ? as[r - 1] : as[r - 2];
        const i64 k = ta ? as[r - 2] : as[r - 1];
        const i64 kb = tb ? bs[r - 1] : bs[r - 2];
        const i64 n = tb ? bs[r - 2] : bs[r - 1];
        if (k != kb) {
            throw std::invalid_argument("matmul: inner dims disagree, " +
                                        shape_str(as) + " x " + shape_str(bs));
        }
        Shape out_shape(as.begin(), as.end() - 2);
        out_shape.push_back(m);
        out_shape.push_back(n);
        TensorT<S> out = detail::make_out(tape, std::move(out_shape), {&a, &b});
        const i64 sa = as[r - 2] * as[r - 1];
        const i64 sb = bs[r - 2] * bs[r - 1];
        const i64 sc = m * n;
        kernels::matmul_batched(a.data(), b.data(), out.data(), batch, m, n, k,
                                ta, tb, false, sa, sb, sc);
        if (out.requires_grad()) {
            tape->record([a, b, out, batch, m, n, k, ta, tb, sa, sb, sc]() mutable {
                const S* dc = out.grad();
                if (a.requires_grad()) {
                    if (!ta) {
                        kernels::matmul_batched(dc, b.data(), a.grad(), batch,
                                                m, k, n, false, !tb, true,
                                                sc, sb, sa);
                    } else {
                        kernels::matmul_batched(b.data(), dc, a.grad(), batch,
                                                k, m, n, tb, true, true,
                                                sb, sc, sa);
                    }
                }
                if (b.requires_grad()) {
                    if (!tb) {
                        kernels::matmul_batched(a.data(), dc, b.grad(), batch,
                                                k, n, m, !ta, false, true,
                                                sa, sc, sb);
                    } else {
                        kernels::matmul_batched(dc, a.data(), b.grad(), batch,
                                                n, k, m, true, ta, true,
                                                sc, sa, sb);
                    }
                }
            });
        }
        return out;
    }

    throw std::invalid_argument("matmul: unsupported ranks " + shape_str(as) +
                                " x " + shape_str(bs));
}

// ---------------------------------------------------------------------------
// add: same-shape elementwise, or b broadcast across the last dimension
// (bias). mul: same-shape elementwise. scale: multiply by a constant.
// ---------------------------------------------------------------------------
template <class S>
TensorT<S> add(Tape<S>* tape, const TensorT<S>& a, const TensorT<S>& b) {
    const bool bias = b.rank() == 1 && a.rank() >= 1 &&
                      a.shape().back() == b.dim(0) && a.shape() != b.shape();
    if (!bias && a.shape() != b.shape()) {
        throw std::invalid_argument("add: shapes " + shape_str(a.shape()) +
                                    " vs " + shape_str(b.shape()));
    }
    TensorT<S> out = detail::make_out(tape, a.shape(), {&a, &b});
    const i64 total = a.size();
    if (bias) {
        const i64 n = b.dim(0);
        const i64 rows = total / n;
        const S* ad = a.data();
        const S* bd = b.data();
        S* od = out.data();
#pragma omp parallel for schedule(static)
        for (i64 r = 0; r < rows; ++r) {
            for (i64 j = 0; j < n; ++j) od[r * n + j] = ad[r * n + j] + bd[j];
        }
    } else {
        const S* ad = a.data();
        const S* bd = b.data();
        S* od = out.data();
#pragma omp parallel for schedule(static)
        for (i64 i = 0; i < total; ++i) od[i] = ad[i] + bd[i];
    }
    if (out.requires_grad()) {
        tape->record([a, b, out, bias, total]() mutable {
            const S* dout = out.grad();
            if (a.requires_grad()) {
                S* da = a.grad();
                for (i64 i = 0; i < total; ++i) da[i] += dout[i];
            }
            if (b.requires_grad()) {
                if (bias) {
                    const i64 n = b.dim(0);
                    kernels::colsum_accum(dout, b.grad(), total / n, n);
                } else {
                    S* db = b.grad();
                    for (i64 i = 0; i < total; ++i) db[i] += dout[i];
                }
            }
        });
    }
    return out;
}

template <class S>
TensorT<S> mul(Tape<S>* tape, const TensorT<S>& a, const TensorT<S>& b) {
    if (a.shape() != b.shape()) {
        throw std::invalid_argument("mul: shapes " + shape_str(a.shape()) +
                                    " vs " + shape_str(b.shape()));
    }
    TensorT<S> out = detail::make_out(tape, a.shape(), {&a, &b});
    const i64 total = a.size();
    const S* ad = a.data();
    const S* bd = b.data();
    S* od = out.data();
#pragma omp parallel for schedule(static)
    for (i64 i = 0; i < total; ++i) od[i] = ad[i] * bd[i];
    if (out.requires_grad()) {
        tape->record([a, b, out, total]() mutable {
            const S* dout = out.grad();
            if (a.requires_grad()) {
                S* da = a.grad();
                const S* bd2 = b.data();
                for (i64 i = 0; i < total; ++i) da[i] += dout[i] * bd2[i];
            }
            if (b.requires_grad()) {
                S* db = b.grad();
                const S* ad2 = a.data();
                for (i64 i = 0; i < total; ++i) db[i] += dout[i] * ad2[i];
            }
        });
    }
    return out;
}

template <class S>
TensorT<S> scale(Tape<S>* tape, const TensorT<S>& a, S c) {
    TensorT<S> out = detail::make_out(tape, a.shape(), {&a});
    const i64 total = a.size();
    const S* ad = a.data();
    S* od = out.data();
#pragma omp parallel for schedule(static)
    for (i64 i = 0; i < total; ++i) od[i] = ad[i] * c;
    if (out.requires_grad()) {
        tape->record([a, out, c, total]() mutable {
            const S* dout = out.grad();
            S* da = a.grad();
            for (i64 i = 0; i < total; ++i) da[i] += dout[i] * c;
        });
    }
    return out;
}

// ---------------------------------------------------------------------------
// softmax over an arbitrary axis (max-subtracted).
// ---------------------------------------------------------------------------
template <class S>
TensorT<S> softmax(Tape<S>* tape, const TensorT<S>& x, int axis) {
    if (axis < 0 || axis >= x.rank()) {
        throw std::invalid_argument("softmax: axis " + std::to_string(axis) +
                                    " out of range for " + shape_str(x.shape()));
    }
    const i64 n = x.dim(axis);
    const i64 outer = detail::leading(x.shape(), static_cast<std::size_t>(axis));
    i64 inner = 1;
    for (i64 i = axis + 1; i < x.rank(); ++i) inner *= x.dim(i);

    TensorT<S> out = detail::make_out(tape, x.shape(), {&x});
    const S* xd = x.data();
    S* yd = out.data();
#pragma omp parallel for schedule(static)
    for (i64 t = 0; t < outer * inner; ++t) {
        const i64 o = t / inner;
        const i64 in = t % inner;
        const S* xs = xd + o * n * inner + in;
        S* ys = yd + o * n * inner + in;
        S mx = xs[0];
        for (i64 j = 1; j < n; ++j) {
            const S v = xs[j * inner];
            if (v > mx) mx = v;
        }
        S sum = S(0);
        for (i64 j = 0; j < n; ++j) {
            const S e = std::exp(xs[j * inner] - mx);
            ys[j * inner] = e;
            sum += e;
        }
        const S invs = S(1) / sum;
        for (i64 j = 0; j < n; ++j) ys[j * inner] *= invs;
    }
    if (out.requires_grad()) {
        tape->record([x, out, n, outer, inner]() mutable {
            const S* yd2 = out.data();
            const S* dyd = out.grad();
            S* dxd = x.grad();
            for (i64 t = 0; t < outer * inner; ++t) {
                const i64 o = t / inner;
                const i64 in = t % inner;
                const i64 base = o * n * inner + in;
                S dot = S(0);
                for (i64 j = 0; j < n; ++j) {
                    dot += yd2[base + j * inner] * dyd[base + j * inner];
                }
                for (i64 j = 0; j < n; ++j) {
                    const i64 idx = base + j * inner;
                    dxd[idx] += yd2[idx] * (dyd[idx] - dot);
                }
            }
        });
    }
    return out;
}

// Attention softmax: x is [B, H, Tq, Tk]; mask is [B, Tq, Tk] (nonzero =
// may attend), shared across heads. Masked-out entries get weight 0.
template <class S>
TensorT<S> masked_softmax(Tape<S>* tape, const TensorT<S>& x,
                          std::shared_ptr<std::vector<unsigned char>> mask) {
    if (x.rank() != 4) {
        throw std::invalid_argument("masked_softmax: expected rank 4, got " +
                                    shape_str(x.shape()));
    }
    const i64 b = x.dim(0), h = x.dim(1), tq = x.dim(2), tk = x.dim(3);
    if (static_cast<i64>(mask->size()) != b * tq * tk) {
        throw std::invalid_argument("masked_softmax: mask size mismatch");
    }
    TensorT<S> out = detail::make_out(tape, x.shape(), {&x});
    const S* xd = x.data();
    S* yd = out.data();
    const unsigned char* md = mask->data();
#pragma omp parallel for schedule(static)
    for (i64 r = 0; r < b * h * tq; ++r) {
        const i64 bi = r / (h * tq);
        const i64 qi = r % tq;
        kernels::serial::masked_softmax_rows(xd + r * tk,
                                             md + (bi * tq + qi) * tk,
                                             yd + r * tk, 1, tk);
    }
    if (out.requires_grad()) {
        const i64 rows = b * h * tq;
        tape->record([x, out, rows, tk]() mutable {
            kernels::softmax_backward_rows(out.data(), out.grad(), x.grad(),
                                           rows, tk);
        });
    }
    return out;
}

// ---------------------------------------------------------------------------
// layer_norm over the last dimension.
// ---------------------------------------------------------------------------
template <class S>
TensorT<S> layer_norm(Tape<S>* tape, const TensorT<S>& x, const TensorT<S>& gain,
                      const TensorT<S>& bias, S eps) {
    const i64 n = x.shape().back();
    if (gain.size() != n || bias.size() != n) {
        throw std::invalid_argument("layer_norm: gain/bias length " +
                                    std::to_string(gain.size()) + "/" +
                                    std::to_string(bias.size()) +
                                    " does not match last dim " + std::to_string(n));
    }
    if (eps <= S(0)) {
        throw std::invalid_argument("layer_norm: eps must be positive");
    }
    const i64 rows = x.size() / n;
    TensorT<S> out = detail::make_out(tape, x.shape(), {&x, &gain, &bias});
    kernels::layer_norm_rows(x.data(), gain.data(), bias.data(), out.data(),
                             rows, n, eps);
    if (out.requires_grad()) {
        tape->record([x, gain, bias, out, rows, n, eps]() mutable {
            const S* xd = x.data();
            const S* gd = gain.data();
            const S* dyd = out.grad();
            S* dxd = x.requires_grad() ? x.grad() : nullptr;
            if (dxd) {
#pragma omp parallel for schedule(static)
                for (i64 r = 0; r < rows; ++r) {
                    const S* xr = xd + r * n;
                    const S* dyr = dyd + r * n;
                    S* dxr = dxd + r * n;
                    S mean = S(0);
                    for (i64 j = 0; j < n; ++j) mean += xr[j];
                    mean /= S(n);
                    S var = S(0);
                    for (i64 j = 0; j < n; ++j) {
                        const S d = xr[j] - mean;
                        var += d * d;
                    }
                    var /= S(n);
                    const S inv = S(1) / std::sqrt(var + eps);
                    S mean_dxhat = S(0), mean_dxhat_xhat = S(0);
                    for (i64 j = 0; j < n; ++j) {
                        const S xhat = (xr[j] - mean) * inv;
                        const S dxhat = dyr[j] * gd[j];
                        mean_dxhat += dxhat;
                        mean_dxhat_xhat += dxhat * xhat;
                    }
                    mean_dxhat /= S(n);
                    mean_dxhat_xhat /= S(n);
                    for (i64 j = 0; j < n; ++j) {
                        const S xhat = (xr[j] - mean) * inv;
                        const S dxhat = dyr[j] * gd[j];
                        dxr[j] += inv * (dxhat - mean_dxhat - xhat * mean_dxhat_xhat);
                    }
                }
            }
            if (gain.requires_grad() || bias.requires_grad()) {
                S* dg = gain.requires_grad() ? gain.grad() : nullptr;
                S* db = bias.requires_grad() ? bias.grad() : nullptr;
                for (i64 r = 0; r < rows; ++r) {
                    const S* xr = xd + r * n;
                    const S* dyr = dyd + r * n;
                    S mean = S(0);
                    for (i64 j = 0; j < n; ++j) mean += xr[j];
                    mean /= S(n);
                    S var = S(0);
                    for (i64 j = 0; j < n; ++j) {
                        const S d = xr[j] - mean;
                        var += d * d;
                    }
                    var /= S(n);
                    const S inv = S(1) / std::sqrt(var + eps);
                    for (i64 j = 0; j < n; ++j) {
                        if (dg) dg[j] += dyr[j] * (xr[j] - mean) * inv;
                        if (db) db[j] += dyr[j];
                    }
                }
            }
        });
    }
    return out;
}

// ---------------------------------------------------------------------------
// embedding gather: rows of `table` ([vocab, width]) selected by `ids`.
// Output shape is id_shape + [width].
// ---------------------------------------------------------------------------
template <class S>
TensorT<S> embedding(Tape<S>* tape, const TensorT<S>& table,
                     std::shared_ptr<std::vector<int>> ids, Shape id_shape) {
    const i64 vocab = table.dim(0);
    const i64 width = table.dim(1);
    const i64 count = numel(id_shape);
    if (count != static_cast<i64>(ids->size())) {
        throw std::invalid_argument("embedding: id shape mismatch");
    }
    for (int id : *ids) {
        if (id < 0 || id >= vocab) {
            throw std::invalid_argument("embedding: id " + std::to_string(id) +
                                        " out of range for vocab " +
                                        std::to_string(vocab));
        }
    }
    Shape out_shape = id_shape;
    out_shape.push_back(width);
    TensorT<S> out = detail::make_out(tape, std::move(out_shape), {&table});
    const S* td = table.data();
    S* od = out.data();
    const int* idp = ids->data();
#pragma omp parallel for schedule(static)
    for (i64 i = 0; i < count; ++i) {
        const S* src = td + static_cast<i64>(idp[i]) * width;
        S* dst = od + i * width;
        for (i64 j = 0; j < width; ++j) dst[j] = src[j];
    }
    if (out.requires_grad()) {
        tape->record([table, out, ids, count, width]() mutable {
            S* tg = table.grad();
            const S* dout = out.grad();
            const int* idp2 = ids->data();
            for (i64 i = 0; i < count; ++i) {
                S* dst = tg + static_cast<i64>(idp2[i]) * width;
                const S* src = dout + i * width;
                for (i64 j = 0; j < width; ++j) dst[j] += src[j];
            }
        });
    }
    return out;
}

// ---------------------------------------------------------------------------
// GELU (exact, erf form).
// ---------------------------------------------------------------------------
template <class S>
TensorT<S> gelu(Tape<S>* tape, const TensorT<S>& x) {
    TensorT<S> out = detail::make_out(tape, x.shape(), {&x});
    const i64 total = x.size();
    kernels::gelu(x.data(), out.data(), total);
    if (out.requires_grad()) {
        tape->record([x, out, total]() mutable {
            constexpr double inv_sqrt2 = 0.70710678118654752440;
            constexpr double inv_sqrt2pi = 0.39894228040143267794;
            const S* xd = x.data();
            const S* dout = out.grad();
            S* dx = x.grad();
#pragma omp parallel for schedule(static)
            for (i64 i = 0; i < total; ++i) {
                const double xi = static_cast<double>(xd[i]);
                const double cdf = 0.5 * (1.0 + std::erf(xi * inv_sqrt2));
                const double pdf = inv_sqrt2pi * std::exp(-0.5 * xi * xi);
                dx[i] += dout[i] * static_cast<S>(cdf + xi * pdf);
            }
        });
    }
    return out;
}

// ---------------------------------------------------------------------------
// Cross-entropy with fused log-softmax. logits is [batch, time, vocab];
// targets holds batch*time token ids. Positions whose target equals pad_id
// carry zero weight; the result is the mean NLL over the remaining positions.
// ---------------------------------------------------------------------------
template <class S>
TensorT<S> cross_entropy(Tape<S>* tape, const TensorT<S>& logits,
                         std::shared_ptr<std::vector<int>> targets, int pad_id) {
    if (logits.rank() != 3) {
        throw std::invalid_argument("cross_entropy: logits must be rank 3, got " +
                                    shape_str(logits.shape()));
    }
    const i64 rows = logits.dim(0) * logits.dim(1);
    const i64 vocab = logits.dim(2);
    if (static_cast<i64>(targets->size()) != rows) {
        throw std::invalid_argument("cross_entropy: target count mismatch");
    }
    i64 live = 0;
    for (int t : *targets) {
        if (t != pad_id) {
            if (t < 0 || t >= vocab) {
                throw std::invalid_argument("cross_entropy: target id " +
                                            std::to_string(t) + " out of range");
            }
            ++live;
        }
    }
    if (live == 0) {
        throw std::domain_error("cross_entropy: every target position is pad; "
                                "mean loss is undefined");
    }

    auto lse = std::make_shared<std::vector<S>>(rows);
    kernels::logsumexp_rows(logits.data(), lse->data(), rows, vocab);

    const S* ld = logits.data();
    const int* tg = targets->data();
    S total = S(0);
    for (i64 r = 0; r < rows; ++r) {
        if (tg[r] == pad_id) continue;
        total += (*lse)[r] - ld[r * vocab + tg[r]];
    }
    TensorT<S> out = detail::make_out(tape, Shape{1}, {&logits});
    out.data()[0] = total / static_cast<S>(live);

    if (out.requires_grad()) {
        tape->record([logits, out, targets, lse, rows, vocab, pad_id, live]() mutable {
            const S g = out.grad()[0] / static_cast<S>(live);
            const S* ld2 = logits.data();
            const int* tg2 = targets->data();
            S* dl = logits.grad();
#pragma omp parallel for schedule(static)
            for (i64 r = 0; r < rows; ++r) {
                if (tg2[r] == pad_id) continue;
                const S* lr = ld2 + r * vocab;
                S* dr = dl + r * vocab;
                const S l = (*lse)[r];
                for (i64 v = 0; v < vocab; ++v) {
                    S p = std::exp(lr[v] - l);
                    if (v == tg2[r]) p -= S(1);
                    dr[v] += g * p;
                }
            }
        });
    }
    return out;
}

// ---------------------------------------------------------------------------
// transpose_12: [A, B, C, D] -> [A, C, B, D] (attention head split/merge).
// ---------------------------------------------------------------------------
template <class S>
TensorT<S> transpose_12(Tape<S>* tape, const TensorT<S>& x) {
    if (x.rank() != 4) {
        throw std::invalid_argument("transpose_12: expected rank 4, got " +
                                    shape_str(x.shape()));
    }
    const i64 a = x.dim(0), b = x.dim(1), c = x.dim(2), d = x.dim(3);
    TensorT<S> out = detail::make_out(tape, Shape{a, c, b, d}, {&x});
    const S* xd = x.data();
    S* od = out.data();
#pragma omp parallel for schedule(static)
    for (i64 t = 0; t < a * b * c; ++t) {
        const i64 ai = t / (b * c);
        const i64 bi = (t / c) % b;
        const i64 ci = t % c;
        const S* src = xd + ((ai * b + bi) * c + ci) * d;
        S* dst = od + ((ai * c + ci) * b + bi) * d;
        for (i64 j = 0; j < d; ++j) dst[j] = src[j];
    }
    if (out.requires_grad()) {
        tape->record([x, out, a, b, c, d]() mutable {
            const S* dout = out.grad();
            S* dx = x.grad();
#pragma omp parallel for schedule(static)
            for (i64 t = 0; t < a * b * c; ++t) {
                const i64 ai = t / (b * c);
                const i64 bi = (t / c) % b;
                const i64 ci = t % c;
                const S* src = dout + ((ai * c + ci) * b + bi) * d;
                S* dst = dx + ((ai * b + bi) * c + ci) * d;
                for (i64 j = 0; j < d; ++j) dst[j] += src[j];
            }
        });
    }
    return out;
}

// Sum of all elements, as a scalar tensor.
template <class S>
TensorT<S> sum(Tape<S>* tape, const TensorT<S>& x) {
    TensorT<S> out = detail::make_out(tape, Shape{1}, {&x});
    const i64 total = x.size();
    const S* xd = x.data();
    S acc = S(0);
    for (i64 i = 0; i < total; ++i) acc += xd[i];
    out.data()[0] = acc;
    if (out.requires_grad()) {
        tape->record([x, out, total]() mutable {
            const S g = out.grad()[0];
            S* dx = x.grad();
            for (i64 i = 0; i < total; ++i) dx[i] += g;
        });
    }
    return out;
}

}  // namespace qglab::ops
