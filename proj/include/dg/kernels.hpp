#pragma once

#include <algorithm>
#include <cmath>

#include "dg/common.hpp"

#ifdef _OPENMP
#include <omp.h>
#endif

// Compute kernels for the hot loops (matmul, conv2d, softmax, resampling).
// Each kernel has a serial reference and an OpenMP variant. Both variants run
// the same per-output-element routine, and every output element is owned by a
// single thread with a fixed-order inner reduction, so the parallel results
// are bit-identical to the serial ones for any thread count. Grad kernels
// accumulate (+=) into their outputs; callers zero-fill first.
namespace dg::kern {

enum class Backend { Serial, OpenMP };

inline Backend& backend() {
#ifdef _OPENMP
    static Backend b = Backend::OpenMP;
#else
    static Backend b = Backend::Serial;
#endif
    return b;
}

// Work (multiply-accumulate count) below which forking a parallel region
// costs more than it saves; dispatchers fall back to the serial path.
inline constexpr long kParallelGrain = 100000;

inline bool go_parallel(long work) {
    return backend() == Backend::OpenMP && work > kParallelGrain;
}

// ---------------------------------------------------------------- matmul
// C[M,N] (+)= op(A)[M,K] * op(B)[K,N]; tX means X is stored transposed.

template <class S>
inline S mm_dot(const S* A, const S* B, int m, int n, int K, int lda, int ldb, bool tA, bool tB) {
    S acc = S(0);
    for (int k = 0; k < K; ++k) {
        S a = tA ? A[k * lda + m] : A[m * lda + k];
        S b = tB ? B[n * ldb + k] : B[k * ldb + n];
        acc += a * b;
    }
    return acc;
}

template <class S>
void matmul_serial(const S* A, const S* B, S* C, int M, int N, int K, bool tA, bool tB,
                   bool accum) {
    const int lda = tA ? M : K;
    const int ldb = tB ? K : N;
    for (int m = 0; m < M; ++m)
        for (int n = 0; n < N; ++n) {
            S v = mm_dot(A, B, m, n, K, lda, ldb, tA, tB);
            if (accum)
                C[m * N + n] += v;
            else
                C[m * N + n] = v;
        }
}

template <class S>
void matmul_omp(const S* A, const S* B, S* C, int M, int N, int K, bool tA, bool tB, bool accum) {
    const int lda = tA ? M : K;
    const int ldb = tB ? K : N;
#ifdef _OPENMP
#pragma omp parallel for schedule(static)
#endif
    for (int m = 0; m < M; ++m)
        for (int n = 0; n < N; ++n) {
            S v = mm_dot(A, B, m, n, K, lda, ldb, tA, tB);
            if (accum)
                C[m * N + n] += v;
            else
                C[m * N + n] = v;
        }
}

template <class S>
void matmul(const S* A, const S* B, S* C, int M, int N, int K, bool tA, bool tB, bool accum) {
    if (go_parallel(static_cast<long>(M) * N * K))
        matmul_omp(A, B, C, M, N, K, tA, tB, accum);
    else
        matmul_serial(A, B, C, M, N, K, tA, tB, accum);
}

// ---------------------------------------------------------------- conv2d
// x:[Cin,H,W] w:[Cout,Cin,k,k] b:[Cout] y:[Cout,Ho,Wo]

struct ConvDims {
    int cin, h, w, cout, k, stride, pad, ho, wo;
};

inline ConvDims conv_dims(int cin, int h, int w, int cout, int k, int stride, int pad) {
    ConvDims d{cin, h, w, cout, k, stride, pad, 0, 0};
    d.ho = (h + 2 * pad - k) / stride + 1;
    d.wo = (w + 2 * pad - k) / stride + 1;
    return d;
}

template <class S>
inline S conv_fwd_at(const S* x, const S* w, const ConvDims& d, int co, int oh, int ow) {
    const int ih0 = oh * d.stride - d.pad;
    const int iw0 = ow * d.stride - d.pad;
    const int kh0 = ih0 < 0 ? -ih0 : 0;
    const int kh1 = std::min(d.k, d.h - ih0);
    const int kw0 = iw0 < 0 ? -iw0 : 0;
    const int kw1 = std::min(d.k, d.w - iw0);
    S acc = S(0);
    for (int ci = 0; ci < d.cin; ++ci) {
        const S* xc = x + (static_cast<std::size_t>(ci) * d.h) * d.w;
        const S* wc = w + (static_cast<std::size_t>(co) * d.cin + ci) * d.k * d.k;
        for (int kh = kh0; kh < kh1; ++kh) {
            const S* xrow = xc + (ih0 + kh) * d.w + iw0;
            const S* wrow = wc + kh * d.k;
            for (int kw = kw0; kw < kw1; ++kw) acc += xrow[kw] * wrow[kw];
        }
    }
    return acc;
}

template <class S>
void conv2d_fwd_serial(const S* x, const S* w, const S* b, S* y, const ConvDims& d) {
    for (int co = 0; co < d.cout; ++co)
        for (int oh = 0; oh < d.ho; ++oh)
            for (int ow = 0; ow < d.wo; ++ow)
                y[(co * d.ho + oh) * d.wo + ow] = conv_fwd_at(x, w, d, co, oh, ow) + b[co];
}

template <class S>
void conv2d_fwd_omp(const S* x, const S* w, const S* b, S* y, const ConvDims& d) {
#ifdef _OPENMP
#pragma omp parallel for schedule(static)
#endif
    for (int co = 0; co < d.cout; ++co)
        for (int oh = 0; oh < d.ho; ++oh)
            for (int ow = 0; ow < d.wo; ++ow)
                y[(co * d.ho + oh) * d.wo + ow] = conv_fwd_at(x, w, d, co, oh, ow) + b[co];
}

inline long conv_work(const ConvDims& d) {
    return static_cast<long>(d.cout) * d.ho * d.wo * d.cin * d.k * d.k;
}

template <class S>
void conv2d_fwd(const S* x, const S* w, const S* b, S* y, const ConvDims& d) {
    if (go_parallel(conv_work(d)))
        conv2d_fwd_omp(x, w, b, y, d);
    else
        conv2d_fwd_serial(x, w, b, y, d);
}

template <class S>
inline S conv_bwd_input_at(const S* gy, const S* w, const ConvDims& d, int ci, int ih, int iw) {
    // valid taps satisfy kh ≡ ih+pad (mod stride) with oh = (ih+pad-kh)/stride
    const int hp = ih + d.pad, wp = iw + d.pad;
    int kh_lo = hp - (d.ho - 1) * d.stride;
    if (kh_lo < 0) kh_lo = hp % d.stride;
    const int kh_hi = std::min(d.k - 1, hp);
    int kw_lo = wp - (d.wo - 1) * d.stride;
    if (kw_lo < 0) kw_lo = wp % d.stride;
    const int kw_hi = std::min(d.k - 1, wp);
    S acc = S(0);
    for (int co = 0; co < d.cout; ++co) {
        const S* gyc = gy + static_cast<std::size_t>(co) * d.ho * d.wo;
        const S* wc = w + (static_cast<std::size_t>(co) * d.cin + ci) * d.k * d.k;
        for (int kh = kh_lo; kh <= kh_hi; kh += d.stride) {
            const S* gyrow = gyc + ((hp - kh) / d.stride) * d.wo;
            const S* wrow = wc + kh * d.k;
            for (int kw = kw_lo; kw <= kw_hi; kw += d.stride)
                acc += gyrow[(wp - kw) / d.stride] * wrow[kw];
        }
    }
    return acc;
}

template <class S>
void conv2d_bwd_input_serial(const S* gy, const S* w, S* gx, const ConvDims& d) {
    for (int ci = 0; ci < d.cin; ++ci)
        for (int ih = 0; ih < d.h; ++ih)
            for (int iw = 0; iw < d.w; ++iw)
                gx[(ci * d.h + ih) * d.w + iw] += conv_bwd_input_at(gy, w, d, ci, ih, iw);
}

template <class S>
void conv2d_bwd_input_omp(const S* gy, const S* w, S* gx, const ConvDims& d) {
#ifdef _OPENMP
#pragma omp parallel for schedule(static)
#endif
    for (int ci = 0; ci < d.cin; ++ci)
        for (int ih = 0; ih < d.h; ++ih)
            for (int iw = 0; iw < d.w; ++iw)
                gx[(ci * d.h + ih) * d.w + iw] += conv_bwd_input_at(gy, w, d, ci, ih, iw);
}

template <class S>
void conv2d_bwd_input(const S* gy, const S* w, S* gx, const ConvDims& d) {
    if (go_parallel(conv_work(d)))
        conv2d_bwd_input_omp(gy, w, gx, d);
    else
        conv2d_bwd_input_serial(gy, w, gx, d);
}

template <class S>
inline S conv_bwd_weight_at(const S* gy, const S* x, const ConvDims& d, int co, int ci, int kh,
                            int kw) {
    // iw = ow*stride + woff must land in [0, w); same for rows
    const int woff = kw - d.pad;
    const int hoff = kh - d.pad;
    const int ow_lo = woff < 0 ? (-woff + d.stride - 1) / d.stride : 0;
    const int ow_hi = std::min(d.wo, (d.w - 1 - woff) / d.stride + 1);
    const int oh_lo = hoff < 0 ? (-hoff + d.stride - 1) / d.stride : 0;
    const int oh_hi = std::min(d.ho, (d.h - 1 - hoff) / d.stride + 1);
    S acc = S(0);
    const S* gyc = gy + static_cast<std::size_t>(co) * d.ho * d.wo;
    const S* xc = x + static_cast<std::size_t>(ci) * d.h * d.w;
    for (int oh = oh_lo; oh < oh_hi; ++oh) {
        const S* gyrow = gyc + oh * d.wo;
        const S* xrow = xc + (oh * d.stride + hoff) * d.w + woff;
        for (int ow = ow_lo; ow < ow_hi; ++ow) acc += gyrow[ow] * xrow[ow * d.stride];
    }
    return acc;
}

template <class S>
void conv2d_bwd_weight_serial(const S* gy, const S* x, S* gw, S* gb, const ConvDims& d) {
    for (int co = 0; co < d.cout; ++co)
        for (int ci = 0; ci < d.cin; ++ci)
            for (int kh = 0; kh < d.k; ++kh)
                for (int kw = 0; kw < d.k; ++kw)
                    gw[((co * d.cin + ci) * d.k + kh) * d.k + kw] +=
                        conv_bwd_weight_at(gy, x, d, co, ci, kh, kw);
    for (int co = 0; co < d.cout; ++co) {
        S acc = S(0);
        for (int i = 0; i < d.ho * d.wo; ++i) acc += gy[co * d.ho * d.wo + i];
        gb[co] += acc;
    }
}

template <class S>
void conv2d_bwd_weight_omp(const S* gy, const S* x, S* gw, S* gb, const ConvDims& d) {
    const int nw = d.cout * d.cin * d.k * d.k;
#ifdef _OPENMP
#pragma omp parallel for schedule(static)
#endif
    for (int idx = 0; idx < nw; ++idx) {
        const int kw = idx % d.k;
        const int kh = (idx / d.k) % d.k;
        const int ci = (idx / (d.k * d.k)) % d.cin;
        const int co = idx / (d.k * d.k * d.cin);
        gw[idx] += conv_bwd_weight_at(gy, x, d, co, ci, kh, kw);
    }
#ifdef _OPENMP
#pragma omp parallel for schedule(static)
#endif
    for (int co = 0; co < d.cout; ++co) {
        S acc = S(0);
        for (int i = 0; i < d.ho * d.wo; ++i) acc += gy[co * d.ho * d.wo + i];
        gb[co] += acc;
    }
}

template <class S>
void conv2d_bwd_weight(const S* gy, const S* x, S* gw, S* gb, const ConvDims& d) {
    if (go_parallel(conv_work(d)))
        conv2d_bwd_weight_omp(gy, x, gw, gb, d);
    else
        conv2d_bwd_weight_serial(gy, x, gw, gb, d);
}

// ------------------------------------------------------------- resampling

template <class S>
void upsample2x_fwd(const S* x, S* y, int C, int H, int W) {
    for (int c = 0; c < C; ++c)
        for (int i = 0; i < 2 * H; ++i)
            for (int j = 0; j < 2 * W; ++j)
                y[(c * 2 * H + i) * 2 * W + j] = x[(c * H + i / 2) * W + j / 2];
}

template <class S>
void upsample2x_bwd(const S* gy, S* gx, int C, int H, int W) {
    for (int c = 0; c < C; ++c)
        for (int i = 0; i < H; ++i)
            for (int j = 0; j < W; ++j) {
                S acc = S(0);
                for (int di = 0; di < 2; ++di)
                    for (int dj = 0; dj < 2; ++dj)
                        acc += gy[(c * 2 * H + 2 * i + di) * 2 * W + 2 * j + dj];
                gx[(c * H + i) * W + j] += acc;
            }
}

// ---------------------------------------------------------------- softmax

template <class S>
inline void softmax_row(const S* x, S* y, int C) {
    S mx = x[0];
    for (int c = 1; c < C; ++c) mx = std::max(mx, x[c]);
    S sum = S(0);
    for (int c = 0; c < C; ++c) {
        y[c] = std::exp(x[c] - mx);
        sum += y[c];
    }
    for (int c = 0; c < C; ++c) y[c] /= sum;
}

template <class S>
void softmax_rows_serial(const S* x, S* y, int R, int C) {
    for (int r = 0; r < R; ++r) softmax_row(x + r * C, y + r * C, C);
}

template <class S>
void softmax_rows_omp(const S* x, S* y, int R, int C) {
#ifdef _OPENMP
#pragma omp parallel for schedule(static)
#endif
    for (int r = 0; r < R; ++r) softmax_row(x + r * C, y + r * C, C);
}

template <class S>
void softmax_rows(const S* x, S* y, int R, int C) {
    if (go_parallel(static_cast<long>(R) * C * 8))
        softmax_rows_omp(x, y, R, C);
    else
        softmax_rows_serial(x, y, R, C);
}

}  // namespace dg::kern
