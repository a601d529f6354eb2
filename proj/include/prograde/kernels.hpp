#pragma once

#include <cstring>
#include <vector>

#include "prograde/tensor.hpp"

// Raw dense kernels shared by the tape primitives and the tape-free code
// paths (metrics, dataset prep). Parallel loops always split work so that a
// given output element is produced by one thread with a fixed accumulation
// order, which keeps results independent of the thread count.

namespace prograde::kernels {

namespace detail {

/// Fixed-size micro-kernel: a 4-row by 64-column tile of c accumulated in
/// registers while streaming packed b rows once per k. The per-element
/// summation order is k-ascending, independent of tiling and thread count.
template <typename T>
void gemm_tile_4xNB(const T* a, const T* b_packed, T* c, int m0, int n0, int k_dim, int n_dim) {
    constexpr int kNB = 64;
    T acc[4][kNB];
    for (int r = 0; r < 4; ++r)
        for (int j = 0; j < kNB; ++j) acc[r][j] = c[static_cast<std::int64_t>(m0 + r) * n_dim + n0 + j];
    const T* a0 = a + static_cast<std::int64_t>(m0) * k_dim;
    const T* a1 = a0 + k_dim;
    const T* a2 = a1 + k_dim;
    const T* a3 = a2 + k_dim;
    for (int k = 0; k < k_dim; ++k) {
        const T* brow = b_packed + static_cast<std::int64_t>(k) * kNB;
        const T w0 = a0[k], w1 = a1[k], w2 = a2[k], w3 = a3[k];
        for (int j = 0; j < kNB; ++j) {
            const T bj = brow[j];
            acc[0][j] += w0 * bj;
            acc[1][j] += w1 * bj;
            acc[2][j] += w2 * bj;
            acc[3][j] += w3 * bj;
        }
    }
    for (int r = 0; r < 4; ++r)
        for (int j = 0; j < kNB; ++j) c[static_cast<std::int64_t>(m0 + r) * n_dim + n0 + j] = acc[r][j];
}

/// Skinny-output kernel: out has few columns (small spatial extent), so the
/// multiply runs transposed, vectorizing over the m rows instead.
/// ct[N][M] += sum_k b[k][n] * at[k][m], with at = a transposed to K x M.
/// k is the outer loop so the big at panel streams exactly once while the
/// small N x M accumulator stays cache-resident. Per-element accumulation
/// order is k-ascending regardless of n.
template <typename T>
void gemm_transposed_skinny(const T* at, const T* b, T* ct, int m_dim, int k_dim, int n_dim) {
    int k = 0;
    for (; k + 3 < k_dim; k += 4) {
        const T* r0 = at + static_cast<std::int64_t>(k) * m_dim;
        const T* r1 = r0 + m_dim;
        const T* r2 = r1 + m_dim;
        const T* r3 = r2 + m_dim;
        const T* bk = b + static_cast<std::int64_t>(k) * n_dim;
        for (int n = 0; n < n_dim; ++n) {
            const T w0 = bk[n];
            const T w1 = bk[n_dim + n];
            const T w2 = bk[2 * n_dim + n];
            const T w3 = bk[3 * n_dim + n];
            T* crow = ct + static_cast<std::int64_t>(n) * m_dim;
            for (int m = 0; m < m_dim; ++m) crow[m] += w0 * r0[m] + w1 * r1[m] + w2 * r2[m] + w3 * r3[m];
        }
    }
    for (; k < k_dim; ++k) {
        const T* row = at + static_cast<std::int64_t>(k) * m_dim;
        const T* bk = b + static_cast<std::int64_t>(k) * n_dim;
        for (int n = 0; n < n_dim; ++n) {
            const T w = bk[n];
            T* crow = ct + static_cast<std::int64_t>(n) * m_dim;
            for (int m = 0; m < m_dim; ++m) crow[m] += w * row[m];
        }
    }
}

}  // namespace detail

template <typename T>
void gemm_accumulate(const T* a, const T* b, T* c, int m_dim, int k_dim, int n_dim) {
    // c[M,N] += a[M,K] * b[K,N], row-major. The K x 64 panel of b is packed
    // contiguously once per column block and reused across all row tiles.
    constexpr int kNB = 64;
    const int n_full = n_dim - n_dim % kNB;
    const int m_full = m_dim - m_dim % 4;
    if (n_full > 0 && m_full > 0) {
        std::vector<T> packed(static_cast<std::size_t>(k_dim) * kNB);
        for (int n0 = 0; n0 < n_full; n0 += kNB) {
            for (int k = 0; k < k_dim; ++k)
                std::memcpy(packed.data() + static_cast<std::size_t>(k) * kNB,
                            b + static_cast<std::int64_t>(k) * n_dim + n0, sizeof(T) * kNB);
            for (int m0 = 0; m0 < m_full; m0 += 4) detail::gemm_tile_4xNB(a, packed.data(), c, m0, n0, k_dim, n_dim);
        }
    }

    // Remainder rows/columns: plain k-blocked axpy.
    auto axpy_block = [&](int mb, int me, int nb, int ne) {
        constexpr int kKB = 256;
        for (int kb = 0; kb < k_dim; kb += kKB) {
            const int ke = std::min(k_dim, kb + kKB);
            for (int m = mb; m < me; ++m) {
                T* crow = c + static_cast<std::int64_t>(m) * n_dim;
                const T* arow = a + static_cast<std::int64_t>(m) * k_dim;
                for (int k = kb; k < ke; ++k) {
                    const T w = arow[k];
                    const T* brow = b + static_cast<std::int64_t>(k) * n_dim;
                    for (int n = nb; n < ne; ++n) crow[n] += w * brow[n];
                }
            }
        }
    };
    if (m_full < m_dim) axpy_block(m_full, m_dim, 0, n_full);
    if (n_full < n_dim) axpy_block(0, m_dim, n_full, n_dim);
}

template <typename T>
void im2col(const T* x, int cin, int h, int w, int k, int pad, int ho, int wo, T* col) {
    // col[(c*k+u)*k+v][i*wo+j] = x[c][i+u-pad][j+v-pad], zero outside.
    const std::int64_t n = static_cast<std::int64_t>(ho) * wo;
    for (int c = 0; c < cin; ++c) {
        const T* xc = x + static_cast<std::int64_t>(c) * h * w;
        for (int u = 0; u < k; ++u) {
            for (int v = 0; v < k; ++v) {
                T* row = col + ((static_cast<std::int64_t>(c) * k + u) * k + v) * n;
                for (int i = 0; i < ho; ++i) {
                    const int si = i + u - pad;
                    T* dst = row + static_cast<std::int64_t>(i) * wo;
                    if (si < 0 || si >= h) {
                        std::memset(dst, 0, sizeof(T) * wo);
                        continue;
                    }
                    const T* src = xc + static_cast<std::int64_t>(si) * w;
                    for (int j = 0; j < wo; ++j) {
                        const int sj = j + v - pad;
                        dst[j] = (sj < 0 || sj >= w) ? T(0) : src[sj];
                    }
                }
            }
        }
    }
}

/// Cross-correlation, stride 1: out[b,o,i,j] = sum_{c,u,v} x[b,c,i+u-p,j+v-p] w[o,c,u,v].
template <typename T>
Tensor<T> conv2d(const Tensor<T>& x, const Tensor<T>& w, int pad) {
    const Shape& xs = x.shape();
    const Shape& ws = w.shape();
    check(xs.rank == 4 && ws.rank == 4, "conv2d: rank-4 tensors required");
    check(ws[2] == ws[3], "conv2d: square kernels only");
    check(xs[1] == ws[1], "conv2d: input channels " + std::to_string(xs[1]) +
                              " do not match weight channels " + std::to_string(ws[1]));
    const int batch = xs[0], cin = xs[1], h = xs[2], w_in = xs[3];
    const int cout = ws[0], k = ws[2];
    const int ho = h + 2 * pad - k + 1;
    const int wo = w_in + 2 * pad - k + 1;
    check(ho >= 1 && wo >= 1, "conv2d: kernel " + std::to_string(k) + " with padding " +
                                  std::to_string(pad) + " does not fit input " + xs.str());

    Tensor<T> out = Tensor<T>::zeros({batch, cout, ho, wo});
    const std::int64_t kdim = static_cast<std::int64_t>(cin) * k * k;
    const std::int64_t ndim = static_cast<std::int64_t>(ho) * wo;
    const std::int64_t x_stride = static_cast<std::int64_t>(cin) * h * w_in;
    const std::int64_t o_stride = static_cast<std::int64_t>(cout) * ndim;

    // Few output positions (the 4x4 layers and every weight-gradient pass):
    // run the multiply transposed so vectors span the output channels. The
    // transposed weight panel is shared by the whole batch.
    const bool skinny = ndim < 64 && cout >= 64;
    std::vector<T> wt;
    if (skinny) {
        wt.resize(static_cast<std::size_t>(kdim) * cout);
        for (int m = 0; m < cout; ++m)
            for (std::int64_t kk = 0; kk < kdim; ++kk)
                wt[static_cast<std::size_t>(kk) * cout + m] = w.data()[m * kdim + kk];
    }

    parallel_for(batch, [&](std::int64_t b) {
        std::vector<T> col(kdim * ndim);
        im2col(x.data() + b * x_stride, cin, h, w_in, k, pad, ho, wo, col.data());
        T* dst = out.mutable_data() + b * o_stride;
        if (skinny) {
            std::vector<T> ct(static_cast<std::size_t>(ndim) * cout, T(0));
            detail::gemm_transposed_skinny(wt.data(), col.data(), ct.data(), cout,
                                           static_cast<int>(kdim), static_cast<int>(ndim));
            for (int m = 0; m < cout; ++m)
                for (std::int64_t n = 0; n < ndim; ++n) dst[m * ndim + n] = ct[n * cout + m];
        } else {
            gemm_accumulate(w.data(), col.data(), dst, cout, static_cast<int>(kdim), static_cast<int>(ndim));
        }
    });
    return out;
}

/// Swaps the first two dimensions of a rank-4 tensor.
template <typename T>
Tensor<T> swap01(const Tensor<T>& x) {
    const Shape& s = x.shape();
    check(s.rank == 4, "swap01: rank-4 tensor required");
    const int d0 = s[0], d1 = s[1];
    const std::int64_t inner = static_cast<std::int64_t>(s[2]) * s[3];
    Tensor<T> out = Tensor<T>::uninitialized({d1, d0, s[2], s[3]});
    parallel_for(static_cast<std::int64_t>(d0) * d1, [&](std::int64_t idx) {
        const int i = static_cast<int>(idx / d1), j = static_cast<int>(idx % d1);
        std::memcpy(out.mutable_data() + (static_cast<std::int64_t>(j) * d0 + i) * inner,
                    x.data() + idx * inner, sizeof(T) * inner);
    }, 64);
    return out;
}

/// Reverses the two spatial dimensions of a rank-4 tensor.
template <typename T>
Tensor<T> flip_hw(const Tensor<T>& x) {
    const Shape& s = x.shape();
    check(s.rank == 4, "flip_hw: rank-4 tensor required");
    const int h = s[2], w = s[3];
    Tensor<T> out = Tensor<T>::uninitialized(s);
    const std::int64_t planes = static_cast<std::int64_t>(s[0]) * s[1];
    parallel_for(planes, [&](std::int64_t p) {
        const T* src = x.data() + p * h * w;
        T* dst = out.mutable_data() + p * h * w;
        for (int i = 0; i < h; ++i)
            for (int j = 0; j < w; ++j) dst[i * w + j] = src[(h - 1 - i) * w + (w - 1 - j)];
    }, 64);
    return out;
}

/// 2x2 element replication.
template <typename T>
Tensor<T> upsample2x(const Tensor<T>& x) {
    const Shape& s = x.shape();
    check(s.rank == 4, "upsample2x: rank-4 tensor required");
    const int h = s[2], w = s[3];
    Tensor<T> out = Tensor<T>::uninitialized({s[0], s[1], 2 * h, 2 * w});
    const std::int64_t planes = static_cast<std::int64_t>(s[0]) * s[1];
    parallel_for(planes, [&](std::int64_t p) {
        const T* src = x.data() + p * h * w;
        T* dst = out.mutable_data() + p * 4 * h * w;
        for (int i = 0; i < h; ++i) {
            T* row0 = dst + (2 * i) * 2 * w;
            T* row1 = row0 + 2 * w;
            for (int j = 0; j < w; ++j) {
                const T v = src[i * w + j];
                row0[2 * j] = v;
                row0[2 * j + 1] = v;
                row1[2 * j] = v;
                row1[2 * j + 1] = v;
            }
        }
    }, 16);
    return out;
}

/// Mean over non-overlapping 2x2 blocks.
template <typename T>
Tensor<T> avgpool2x(const Tensor<T>& x) {
    const Shape& s = x.shape();
    check(s.rank == 4, "avgpool2x: rank-4 tensor required");
    check(s[2] % 2 == 0 && s[3] % 2 == 0, "avgpool2x: odd spatial extent " + s.str());
    const int h = s[2] / 2, w = s[3] / 2;
    Tensor<T> out = Tensor<T>::uninitialized({s[0], s[1], h, w});
    const std::int64_t planes = static_cast<std::int64_t>(s[0]) * s[1];
    parallel_for(planes, [&](std::int64_t p) {
        const T* src = x.data() + p * 4 * h * w;
        T* dst = out.mutable_data() + p * h * w;
        for (int i = 0; i < h; ++i) {
            const T* row0 = src + (2 * i) * 2 * w;
            const T* row1 = row0 + 2 * w;
            for (int j = 0; j < w; ++j)
                dst[i * w + j] = (row0[2 * j] + row0[2 * j + 1] + row1[2 * j] + row1[2 * j + 1]) * T(0.25);
        }
    }, 16);
    return out;
}

inline Shape pad_to_rank4(const Shape& s) {
    Shape r;
    r.rank = 4;
    for (int i = 0; i < 4; ++i) r.dim[i] = 1;
    for (int i = 0; i < s.rank; ++i) r.dim[4 - s.rank + i] = s.dim[i];
    return r;
}

/// Sums over the axes whose bit is set in axes_mask (bit i = axis i of the
/// rank-4-padded shape); summed axes keep extent 1.
template <typename T>
Tensor<T> sum_axes(const Tensor<T>& x, unsigned axes_mask) {
    const Shape in4 = pad_to_rank4(x.shape());
    Shape out4 = in4;
    for (int a = 0; a < 4; ++a)
        if (axes_mask & (1u << a)) out4.dim[a] = 1;
    Shape out = out4;
    out.rank = x.shape().rank;
    for (int i = 0; i < out.rank; ++i) out.dim[i] = out4.dim[4 - out.rank + i];

    Tensor<T> res = Tensor<T>::zeros(out);
    const std::int64_t in_strides[4] = {static_cast<std::int64_t>(in4.dim[1]) * in4.dim[2] * in4.dim[3],
                                        static_cast<std::int64_t>(in4.dim[2]) * in4.dim[3], in4.dim[3], 1};
    // Iterate output-major so each output cell is one serial reduction.
    const std::int64_t out_n = res.numel();
    parallel_for(out_n, [&](std::int64_t oi) {
        std::int64_t rem = oi;
        int o[4];
        o[3] = static_cast<int>(rem % out4.dim[3]); rem /= out4.dim[3];
        o[2] = static_cast<int>(rem % out4.dim[2]); rem /= out4.dim[2];
        o[1] = static_cast<int>(rem % out4.dim[1]); rem /= out4.dim[1];
        o[0] = static_cast<int>(rem);
        T acc = 0;
        const int r0 = (axes_mask & 1u) ? in4.dim[0] : 1;
        const int r1 = (axes_mask & 2u) ? in4.dim[1] : 1;
        const int r2 = (axes_mask & 4u) ? in4.dim[2] : 1;
        const int r3 = (axes_mask & 8u) ? in4.dim[3] : 1;
        for (int a = 0; a < r0; ++a)
            for (int b = 0; b < r1; ++b)
                for (int c = 0; c < r2; ++c)
                    for (int d = 0; d < r3; ++d) {
                        const std::int64_t idx = (o[0] + ((axes_mask & 1u) ? a : 0)) * in_strides[0] +
                                                 (o[1] + ((axes_mask & 2u) ? b : 0)) * in_strides[1] +
                                                 (o[2] + ((axes_mask & 4u) ? c : 0)) * in_strides[2] +
                                                 (o[3] + ((axes_mask & 8u) ? d : 0)) * in_strides[3];
                        acc += x.data()[idx];
                    }
        res.mutable_data()[oi] = acc;
    }, 256);
    return res;
}

/// Materializes a broadcast to `target` (trailing alignment, extent-1 stretch).
template <typename T>
Tensor<T> broadcast_to(const Tensor<T>& x, const Shape& target) {
    const Shape in4 = pad_to_rank4(x.shape());
    const Shape out4 = pad_to_rank4(target);
    for (int i = 0; i < 4; ++i)
        check(in4.dim[i] == out4.dim[i] || in4.dim[i] == 1,
              "broadcast_to: cannot broadcast " + x.shape().str() + " to " + target.str());
    Tensor<T> out = Tensor<T>::uninitialized(target);
    const std::int64_t in_strides[4] = {
        in4.dim[0] == 1 ? 0 : static_cast<std::int64_t>(in4.dim[1]) * in4.dim[2] * in4.dim[3],
        in4.dim[1] == 1 ? 0 : static_cast<std::int64_t>(in4.dim[2]) * in4.dim[3],
        in4.dim[2] == 1 ? 0 : in4.dim[3],
        in4.dim[3] == 1 ? std::int64_t(0) : 1};
    const std::int64_t rows = static_cast<std::int64_t>(out4.dim[0]) * out4.dim[1] * out4.dim[2];
    parallel_for(rows, [&](std::int64_t r) {
        std::int64_t rem = r;
        const int c = static_cast<int>(rem % out4.dim[2]); rem /= out4.dim[2];
        const int b = static_cast<int>(rem % out4.dim[1]); rem /= out4.dim[1];
        const int a = static_cast<int>(rem);
        const T* src = x.data() + a * in_strides[0] + b * in_strides[1] + c * in_strides[2];
        T* dst = out.mutable_data() + r * out4.dim[3];
        if (in_strides[3] == 0) {
            for (int d = 0; d < out4.dim[3]; ++d) dst[d] = src[0];
        } else {
            std::memcpy(dst, src, sizeof(T) * out4.dim[3]);
        }
    }, 512);
    return out;
}

/// Concatenates two rank-4 tensors along the channel axis.
template <typename T>
Tensor<T> concat_channels(const Tensor<T>& a, const Tensor<T>& b) {
    const Shape& sa = a.shape();
    const Shape& sb = b.shape();
    check(sa.rank == 4 && sb.rank == 4 && sa[0] == sb[0] && sa[2] == sb[2] && sa[3] == sb[3],
          "concat_channels: incompatible shapes " + sa.str() + " vs " + sb.str());
    const std::int64_t plane = static_cast<std::int64_t>(sa[2]) * sa[3];
    Tensor<T> out = Tensor<T>::uninitialized({sa[0], sa[1] + sb[1], sa[2], sa[3]});
    for (int n = 0; n < sa[0]; ++n) {
        std::memcpy(out.mutable_data() + (static_cast<std::int64_t>(n) * (sa[1] + sb[1])) * plane,
                    a.data() + static_cast<std::int64_t>(n) * sa[1] * plane, sizeof(T) * sa[1] * plane);
        std::memcpy(out.mutable_data() + (static_cast<std::int64_t>(n) * (sa[1] + sb[1]) + sa[1]) * plane,
                    b.data() + static_cast<std::int64_t>(n) * sb[1] * plane, sizeof(T) * sb[1] * plane);
    }
    return out;
}

/// Channel slice [c0, c1) of a rank-4 tensor.
template <typename T>
Tensor<T> slice_channels(const Tensor<T>& x, int c0, int c1) {
    const Shape& s = x.shape();
    check(s.rank == 4 && 0 <= c0 && c0 < c1 && c1 <= s[1], "slice_channels: bad range");
    const std::int64_t plane = static_cast<std::int64_t>(s[2]) * s[3];
    Tensor<T> out = Tensor<T>::uninitialized({s[0], c1 - c0, s[2], s[3]});
    for (int n = 0; n < s[0]; ++n)
        std::memcpy(out.mutable_data() + static_cast<std::int64_t>(n) * (c1 - c0) * plane,
                    x.data() + (static_cast<std::int64_t>(n) * s[1] + c0) * plane,
                    sizeof(T) * (c1 - c0) * plane);
    return out;
}

}  // namespace prograde::kernels
