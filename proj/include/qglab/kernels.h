// Copyright (c) 2026 the qglab authors
// SPDX-License-Identifier: Apache-2.0
//
// Dense CPU kernels. Every kernel comes in two flavours:
//
//   kernels::serial::*   straightforward reference loops, kept for testing
//   kernels::*           OpenMP versions used by the tensor ops
//
// The parallel versions partition output elements across threads and keep the
// per-element accumulation order identical to the reference, so both flavours
// produce bitwise-identical results for any thread count (the project is
// built with -ffp-contract=off). Scalar reductions stay serial.

#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "qglab/common.h"

namespace qglab::kernels {

using i64 = std::int64_t;

// ---------------------------------------------------------------------------
// Serial reference implementations.
// ---------------------------------------------------------------------------
namespace serial {

// C[m,n] = op(A) * op(B), where op transposes when the flag is set.
// A is [m,k] (or [k,m] if ta), B is [k,n] (or [n,k] if tb).
// When accumulate is set, adds into C instead of overwriting.
template <class S>
void matmul(const S* a, const S* b, S* c, i64 m, i64 n, i64 k,
            bool ta, bool tb, bool accumulate) {
    for (i64 i = 0; i < m; ++i) {
        for (i64 j = 0; j < n; ++j) {
            S acc = accumulate ? c[i * n + j] : S(0);
            for (i64 p = 0; p < k; ++p) {
                const S av = ta ? a[p * m + i] : a[i * k + p];
                const S bv = tb ? b[j * k + p] : b[p * n + j];
                acc += av * bv;
            }
            c[i * n + j] = acc;
        }
    }
}

// Row-wise softmax with max subtraction; rows of length n, `rows` of them.
template <class S>
void softmax_rows(const S* x, S* y, i64 rows, i64 n) {
    for (i64 r = 0; r < rows; ++r) {
        const S* xr = x + r * n;
        S* yr = y + r * n;
        S mx = xr[0];
        for (i64 j = 1; j < n; ++j) mx = xr[j] > mx ? xr[j] : mx;
        S sum = S(0);
        for (i64 j = 0; j < n; ++j) {
            yr[j] = std::exp(xr[j] - mx);
            sum += yr[j];
        }
        const S inv = S(1) / sum;
        for (i64 j = 0; j < n; ++j) yr[j] *= inv;
    }
}

template <class S>
void layer_norm_rows(const S* x, const S* gain, const S* bias, S* y,
                     i64 rows, i64 n, S eps) {
    for (i64 r = 0; r < rows; ++r) {
        const S* xr = x + r * n;
        S* yr = y + r * n;
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
            yr[j] = gain[j] * ((xr[j] - mean) * inv) + bias[j];
        }
    }
}

template <class S>
void gelu(const S* x, S* y, i64 n) {
    constexpr double inv_sqrt2 = 0.70710678118654752440;
    for (i64 i = 0; i < n; ++i) {
        const double xi = static_cast<double>(x[i]);
        y[i] = static_cast<S>(xi * 0.5 * (1.0 + std::erf(xi * inv_sqrt2)));
    }
}

template <class S>
void adam_update(S* p, const S* g, S* m, S* v, i64 n, i64 step,
                 S lr, S beta1, S beta2, S eps) {
    const S bc1 = S(1) - static_cast<S>(std::pow(static_cast<double>(beta1),
                                                 static_cast<double>(step)));
    const S bc2 = S(1) - static_cast<S>(std::pow(static_cast<double>(beta2),
                                                 static_cast<double>(step)));
    for (i64 i = 0; i < n; ++i) {
        m[i] = beta1 * m[i] + (S(1) - beta1) * g[i];
        v[i] = beta2 * v[i] + (S(1) - beta2) * g[i] * g[i];
        const S mhat = m[i] / bc1;
        const S vhat = v[i] / bc2;
        p[i] -= lr * mhat / (std::sqrt(vhat) + eps);
    }
}

// Softmax over the allowed entries of each row; disallowed entries become 0.
// x,y are [rows, n]; mask is [rows, n] with nonzero = allowed. Every row must
// have at least one allowed entry.
template <class S>
void masked_softmax_rows(const S* x, const unsigned char* mask, S* y,
                         i64 rows, i64 n) {
    for (i64 r = 0; r < rows; ++r) {
        const S* xr = x + r * n;
        const unsigned char* mr = mask + r * n;
        S* yr = y + r * n;
        S mx = S(0);
        bool any = false;
        for (i64 j = 0; j < n; ++j) {
            if (mr[j] && (!any || xr[j] > mx)) {
                mx = xr[j];
                any = true;
            }
        }
        S sum = S(0);
        for (i64 j = 0; j < n; ++j) {
            yr[j] = mr[j] ? std::exp(xr[j] - mx) : S(0);
            sum += yr[j];
        }
        const S inv = S(1) / sum;
        for (i64 j = 0; j < n; ++j) yr[j] *= inv;
    }
}

// dx += y * (dy - sum(y * dy)) per row; works for masked rows because y is 0
// at disallowed entries.
template <class S>
void softmax_backward_rows(const S* y, const S* dy, S* dx, i64 rows, i64 n) {
    for (i64 r = 0; r < rows; ++r) {
        const S* yr = y + r * n;
        const S* dyr = dy + r * n;
        S* dxr = dx + r * n;
        S dot = S(0);
        for (i64 j = 0; j < n; ++j) dot += yr[j] * dyr[j];
        for (i64 j = 0; j < n; ++j) dxr[j] += yr[j] * (dyr[j] - dot);
    }
}

// lse[r] = log(sum_j exp(x[r,j])), computed with max subtraction.
template <class S>
void logsumexp_rows(const S* x, S* lse, i64 rows, i64 n) {
    for (i64 r = 0; r < rows; ++r) {
        const S* xr = x + r * n;
        S mx = xr[0];
        for (i64 j = 1; j < n; ++j) mx = xr[j] > mx ? xr[j] : mx;
        S sum = S(0);
        for (i64 j = 0; j < n; ++j) sum += std::exp(xr[j] - mx);
        lse[r] = mx + std::log(sum);
    }
}

// out[j] += sum_r x[r,j] (column sums of a [rows, n] matrix).
template <class S>
void colsum_accum(const S* x, S* out, i64 rows, i64 n) {
    for (i64 j = 0; j < n; ++j) {
        S acc = out[j];
        for (i64 r = 0; r < rows; ++r) acc += x[r * n + j];
        out[j] = acc;
    }
}

}  // namespace serial

// ---------------------------------------------------------------------------
// OpenMP versions. Output elements are partitioned across threads; the inner
// accumulation loops match the serial reference exactly.
// ---------------------------------------------------------------------------

template <class S>
void matmul(const S* a, const S* b, S* c, i64 m, i64 n, i64 k,
            bool ta, bool tb, bool accumulate) {
    if (!ta && !tb) {
        // i-k-j order: the j loop vectorizes without reassociating the sum.
#pragma omp parallel for schedule(static)
        for (i64 i = 0; i < m; ++i) {
            S* cr = c + i * n;
            if (!accumulate) {
                for (i64 j = 0; j < n; ++j) cr[j] = S(0);
            }
            const S* ar = a + i * k;
            for (i64 p = 0; p < k; ++p) {
                const S av = ar[p];
                const S* br = b + p * n;
                for (i64 j = 0; j < n; ++j) cr[j] += av * br[j];
            }
        }
    } else if (!ta && tb) {
        // Dot-product form; both operands scanned contiguously.
#pragma omp parallel for schedule(static)
        for (i64 i = 0; i < m; ++i) {
            const S* ar = a + i * k;
            S* cr = c + i * n;
            for (i64 j = 0; j < n; ++j) {
                const S* br = b + j * k;
                S acc = accumulate ? cr[j] : S(0);
                for (i64 p = 0; p < k; ++p) acc += ar[p] * br[p];
                cr[j] = acc;
            }
        }
    } else if (ta && !tb) {
#pragma omp parallel for schedule(static)
        for (i64 i = 0; i < m; ++i) {
            S* cr = c + i * n;
            if (!accumulate) {
                for (i64 j = 0; j < n; ++j) cr[j] = S(0);
            }
            for (i64 p = 0; p < k; ++p) {
                const S av = a[p * m + i];
                const S* br = b + p * n;
                for (i64 j = 0; j < n; ++j) cr[j] += av * br[j];
            }
        }
    } else {
#pragma omp parallel for schedule(static)
        for (i64 i = 0; i < m; ++i) {
            S* cr = c + i * n;
            for (i64 j = 0; j < n; ++j) {
                const S* br = b + j * k;
                S acc = accumulate ? cr[j] : S(0);
                for (i64 p = 0; p < k; ++p) acc += a[p * m + i] * br[p];
                cr[j] = acc;
            }
        }
    }
}

template <class S>
void softmax_rows(const S* x, S* y, i64 rows, i64 n) {
#pragma omp parallel for schedule(static)
    for (i64 r = 0; r < rows; ++r) {
        serial::softmax_rows(x + r * n, y + r * n, 1, n);
    }
}

template <class S>
void layer_norm_rows(const S* x, const S* gain, const S* bias, S* y,
                     i64 rows, i64 n, S eps) {
#pragma omp parallel for schedule(static)
    for (i64 r = 0; r < rows; ++r) {
        serial::layer_norm_rows(x + r * n, gain, bias, y + r * n, 1, n, eps);
    }
}

template <class S>
void gelu(const S* x, S* y, i64 n) {
#pragma omp parallel for schedule(static)
    for (i64 i = 0; i < n; ++i) {
        serial::gelu(x + i, y + i, 1);
    }
}

template <class S>
void adam_update(S* p, const S* g, S* m, S* v, i64 n, i64 step,
                 S lr, S beta1, S beta2, S eps) {
    const S bc1 = S(1) - static_cast<S>(std::pow(static_cast<double>(beta1),
                                                 static_cast<double>(step)));
    const S bc2 = S(1) - static_cast<S>(std::pow(static_cast<double>(beta2),
                                                 static_cast<double>(step)));
#pragma omp parallel for schedule(static)
    for (i64 i = 0; i < n; ++i) {
        m[i] = beta1 * m[i] + (S(1) - beta1) * g[i];
        v[i] = beta2 * v[i] + (S(1) - beta2) * g[i] * g[i];
        const S mhat = m[i] / bc1;
        const S vhat = v[i] / bc2;
        p[i] -= lr * mhat / (std::sqrt(vhat) + eps);
    }
}

// Batched matmul over `batch` independent slices; strides are in elements.
// Parallelism is over (batch, output row) pairs.
template <class S>
void matmul_batched(const S* a, const S* b, S* c, i64 batch, i64 m, i64 n,
                    i64 k, bool ta, bool tb, bool accumulate,
                    i64 stride_a, i64 stride_b, i64 stride_c) {
#pragma omp parallel for schedule(static)
    for (i64 t = 0; t < batch * m; ++t) {
        const i64 bi = t / m;
        const i64 i = t % m;
        const S* ab = a + bi * stride_a;
        const S* bb = b + bi * stride_b;
        S* cr = c + bi * stride_c + i * n;
        if (!tb) {
            if (!accumulate) {
                for (i64 j = 0; j < n; ++j) cr[j] = S(0);
            }
            for (i64 p = 0; p < k; ++p) {
                const S av = ta ? ab[p * m + i] : ab[i * k + p];
                const S* br = bb + p * n;
                for (i64 j = 0; j < n; ++j) cr[j] += av * br[j];
            }
        } else {
            for (i64 j = 0; j < n; ++j) {
                const S* br = bb + j * k;
                S acc = accumulate ? cr[j] : S(0);
                if (ta) {
                    for (i64 p = 0; p < k; ++p) acc += ab[p * m + i] * br[p];
                } else {
                    const S* ar = ab + i * k;
                    for (i64 p = 0; p < k; ++p) acc += ar[p] * br[p];
                }
                cr[j] = acc;
            }
        }
    }
}

namespace serial {
template <class S>
void matmul_batched(const S* a, const S* b, S* c, i64 batch, i64 m, i64 n,
                    i64 k, bool ta, bool tb, bool accumulate,
                    i64 stride_a, i64 stride_b, i64 stride_c) {
    for (i64 bi = 0; bi < batch; ++bi) {
        matmul(a + bi * stride_a, b + bi * stride_b, c + bi * stride_c,
               m, n, k, ta, tb, accumulate);
    }
}
}  // namespace serial

template <class S>
void masked_softmax_rows(const S* x, const unsigned char* mask, S* y,
                         i64 rows, i64 n) {
#pragma omp parallel for schedule(static)
    for (i64 r = 0; r < rows; ++r) {
        serial::masked_softmax_rows(x + r * n, mask + r * n, y + r * n, 1, n);
    }
}

template <class S>
void softmax_backward_rows(const S* y, const S* dy, S* dx, i64 rows, i64 n) {
#pragma omp parallel for schedule(static)
    for (i64 r = 0; r < rows; ++r) {
        serial::softmax_backward_rows(y + r * n, dy + r * n, dx + r * n, 1, n);
    }
}

template <class S>
void logsumexp_rows(const S* x, S* lse, i64 rows, i64 n) {
#pragma omp parallel for schedule(static)
    for (i64 r = 0; r < rows; ++r) {
        serial::logsumexp_rows(x + r * n, lse + r, 1, n);
    }
}

template <class S>
void colsum_accum(const S* x, S* out, i64 rows, i64 n) {
#pragma omp parallel for schedule(static)
    for (i64 j = 0; j < n; ++j) {
        S acc = out[j];
        for (i64 r = 0; r < rows; ++r) acc += x[r * n + j];
        out[j] = acc;
    }
}

}  // namespace qglab::kernels
