#include "voxatn/ops.hpp"

#include <algorithm>
#include <cmath>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace voxatn::tengine {

namespace {

void require(bool cond, const std::string& msg) {
    if (!cond) throw InternalError(msg);
}

struct ConvShapes {
    int n, c, d, h, w;        // input
    int f;                    // filters
    int od, oh, ow;           // output spatial
};

// Valid output range [lo, hi) along one axis for a fixed kernel offset, so the
// inner loops run without bounds checks.
inline void valid_out_range(int k_off, int pad, int stride, int in_dim, int out_dim, int& lo, int& hi) {
    const int i0 = -pad + k_off;
    lo = i0 < 0 ? (-i0 + stride - 1) / stride : 0;
    hi = out_dim;
    if (i0 + (hi - 1) * stride >= in_dim) hi = (in_dim - 1 - i0) / stride + 1;
}

// One unit-stride output row: out_row[ow] += sum_kw w_row[kw] * in[ow - pw + kw].
// Each output element accumulates its KW terms in ascending kw order into a
// register before the store, which is the same addition sequence as the
// one-term-at-a-time reference. The compile-time KW lets the interior loop
// vectorize without peeling checks.
template <int KW>
void fwd_row_sw1(double* __restrict__ out_row, const double* __restrict__ in_row,
                 const double* __restrict__ w_row, int ow_count, int w, int pw) {
    const int a = std::min(std::max(0, pw), ow_count);
    const int b = std::max(a, std::min(ow_count, w + pw - KW + 1));
    for (int ow = 0; ow < a; ++ow) {
        double acc = out_row[ow];
        const int k_end = std::min(KW, w + pw - ow);
        for (int kw = std::max(0, pw - ow); kw < k_end; ++kw) acc += w_row[kw] * in_row[ow - pw + kw];
        out_row[ow] = acc;
    }
    const double* src = in_row - pw;
#pragma omp simd
    for (int ow = a; ow < b; ++ow) {
        double acc = out_row[ow];
        for (int kw = 0; kw < KW; ++kw) acc += w_row[kw] * src[ow + kw];
        out_row[ow] = acc;
    }
    for (int ow = b; ow < ow_count; ++ow) {
        double acc = out_row[ow];
        const int k_end = std::min(KW, w + pw - ow);
        for (int kw = std::max(0, pw - ow); kw < k_end; ++kw) acc += w_row[kw] * in_row[ow - pw + kw];
        out_row[ow] = acc;
    }
}

using FwdRowFn = void (*)(double* __restrict__, const double* __restrict__, const double* __restrict__, int, int,
                          int);

FwdRowFn fwd_row_for(int kw) {
    switch (kw) {
        case 3: return &fwd_row_sw1<3>;
        case 5: return &fwd_row_sw1<5>;
        case 7: return &fwd_row_sw1<7>;
        default: return nullptr;
    }
}

// A full K-row block (unit stride in h and w): all K*K (kh, kw) taps of one
// kd slice accumulate into each output element in a single pass, so the
// kernel and input rows are touched once instead of K times. in0 points at
// the kh = 0 input row; wk at the K*K weight slice.
template <int K>
void fwd_row_block(double* __restrict__ out_row, const double* __restrict__ in0, std::size_t in_stride,
                   const double* __restrict__ wk, int ow_count, int w, int pw) {
    const int a = std::min(std::max(0, pw), ow_count);
    const int b = std::max(a, std::min(ow_count, w + pw - K + 1));
    auto edge = [&](int ow) {
        double acc = out_row[ow];
        const int k_lo = std::max(0, pw - ow);
        const int k_end = std::min(K, w + pw - ow);
        for (int kh = 0; kh < K; ++kh) {
            const double* src = in0 + kh * in_stride + (ow - pw);
            for (int kw = k_lo; kw < k_end; ++kw) acc += wk[kh * K + kw] * src[kw];
        }
        out_row[ow] = acc;
    };
    for (int ow = 0; ow < a; ++ow) edge(ow);
#pragma omp simd
    for (int ow = a; ow < b; ++ow) {
        double acc = out_row[ow];
        for (int kh = 0; kh < K; ++kh) {
            const double* src = in0 + kh * in_stride - pw;
            for (int kw = 0; kw < K; ++kw) acc += wk[kh * K + kw] * src[ow + kw];
        }
        out_row[ow] = acc;
    }
    for (int ow = b; ow < ow_count; ++ow) edge(ow);
}

using FwdBlockFn = void (*)(double* __restrict__, const double* __restrict__, std::size_t,
                            const double* __restrict__, int, int, int);

FwdBlockFn fwd_block_for(int k) {
    switch (k) {
        case 3: return &fwd_row_block<3>;
        case 5: return &fwd_row_block<5>;
        case 7: return &fwd_row_block<7>;
        default: return nullptr;
    }
}

// Unit-stride input-gradient row as a gather: ig_row[iw] += sum_kw w_row[kw] *
// up_row[iw + pw - kw]. Per target element the kw terms arrive in ascending
// order, matching the scatter formulation one tap at a time.
template <int KW>
void igrad_row_sw1(double* __restrict__ ig_row, const double* __restrict__ up_row,
                   const double* __restrict__ w_row, int w, int ow_count, int pw) {
    const int a = std::min(std::max(0, KW - 1 - pw), w);
    const int b = std::max(a, std::min(w, ow_count - pw));
    for (int iw = 0; iw < a; ++iw) {
        double acc = ig_row[iw];
        const int k_end = std::min(KW, iw + pw + 1);
        for (int kw = std::max(0, iw + pw - ow_count + 1); kw < k_end; ++kw)
            acc += w_row[kw] * up_row[iw + pw - kw];
        ig_row[iw] = acc;
    }
    const double* src = up_row + pw;
#pragma omp simd
    for (int iw = a; iw < b; ++iw) {
        double acc = ig_row[iw];
        for (int kw = 0; kw < KW; ++kw) acc += w_row[kw] * src[iw - kw];
        ig_row[iw] = acc;
    }
    for (int iw = b; iw < w; ++iw) {
        double acc = ig_row[iw];
        const int k_end = std::min(KW, iw + pw + 1);
        for (int kw = std::max(0, iw + pw - ow_count + 1); kw < k_end; ++kw)
            acc += w_row[kw] * up_row[iw + pw - kw];
        ig_row[iw] = acc;
    }
}

using IgradRowFn = void (*)(double* __restrict__, const double* __restrict__, const double* __restrict__, int, int,
                            int);

IgradRowFn igrad_row_for(int kw) {
    switch (kw) {
        case 3: return &igrad_row_sw1<3>;
        case 5: return &igrad_row_sw1<5>;
        case 7: return &igrad_row_sw1<7>;
        default: return nullptr;
    }
}

// Full K-row input-gradient gather (unit stride in h and w): one input row
// collects all K*K (kh, kw) taps of a kd slice in a single pass. up0 points at
// the upstream row for kh = 0 (oh = ih + ph); row kh sits at up0 - kh * up_stride.
template <int K>
void igrad_row_block(double* __restrict__ ig_row, const double* __restrict__ up0, std::size_t up_stride,
                     const double* __restrict__ wk, int w, int ow_count, int pw) {
    const int a = std::min(std::max(0, K - 1 - pw), w);
    const int b = std::max(a, std::min(w, ow_count - pw));
    auto edge = [&](int iw) {
        double acc = ig_row[iw];
        const int k_lo = std::max(0, iw + pw - ow_count + 1);
        const int k_end = std::min(K, iw + pw + 1);
        for (int kh = 0; kh < K; ++kh) {
            const double* src = up0 - kh * up_stride;
            for (int kw = k_lo; kw < k_end; ++kw) acc += wk[kh * K + kw] * src[iw + pw - kw];
        }
        ig_row[iw] = acc;
    };
    for (int iw = 0; iw < a; ++iw) edge(iw);
#pragma omp simd
    for (int iw = a; iw < b; ++iw) {
        double acc = ig_row[iw];
        for (int kh = 0; kh < K; ++kh) {
            const double* src = up0 - kh * up_stride + pw;
            for (int kw = 0; kw < K; ++kw) acc += wk[kh * K + kw] * src[iw - kw];
        }
        ig_row[iw] = acc;
    }
    for (int iw = b; iw < w; ++iw) edge(iw);
}

using IgradBlockFn = void (*)(double* __restrict__, const double* __restrict__, std::size_t,
                              const double* __restrict__, int, int, int);

IgradBlockFn igrad_block_for(int k) {
    switch (k) {
        case 3: return &igrad_row_block<3>;
        case 5: return &igrad_row_block<5>;
        case 7: return &igrad_row_block<7>;
        default: return nullptr;
    }
}

ConvShapes conv_shapes(const Tensor& input, const Tensor& weights, const Tensor& bias, const Conv3dGeom& g) {
    require(input.rank() == 5, "conv3d: input must be rank 5 [N,C,D,H,W], got " + shape_string(input.shape));
    require(weights.rank() == 5, "conv3d: weights must be rank 5 [F,C,kd,kh,kw], got " + shape_string(weights.shape));
    require(bias.rank() == 1 && bias.dim(0) == weights.dim(0),
            "conv3d: bias length must equal filter count F=" + std::to_string(weights.dim(0)));
    require(weights.dim(1) == input.dim(1),
            "conv3d: channel mismatch C=" + std::to_string(input.dim(1)) + " vs weights C=" +
                std::to_string(weights.dim(1)));
    require(weights.dim(2) == g.kd && weights.dim(3) == g.kh && weights.dim(4) == g.kw,
            "conv3d: weight spatial dims disagree with geometry");

    ConvShapes s;
    s.n = input.dim(0);
    s.c = input.dim(1);
    s.d = input.dim(2);
    s.h = input.dim(3);
    s.w = input.dim(4);
    s.f = weights.dim(0);
    s.od = conv_out_dim(s.d, g.kd, g.sd, g.pd);
    s.oh = conv_out_dim(s.h, g.kh, g.sh, g.ph);
    s.ow = conv_out_dim(s.w, g.kw, g.sw, g.pw);
    require(s.od >= 1 && s.oh >= 1 && s.ow >= 1, "conv3d: kernel larger than padded input");
    return s;
}

}  // namespace

int conv_out_dim(int in, int k, int stride, int pad) {
    return (in + 2 * pad - k) / stride + 1;
}

Tensor conv3d_forward(const Tensor& input, const Tensor& weights, const Tensor& bias, const Conv3dGeom& g) {
    const ConvShapes s = conv_shapes(input, weights, bias, g);
    Tensor out({s.n, s.f, s.od, s.oh, s.ow});

    const std::size_t in_hw = static_cast<std::size_t>(s.h) * s.w;
    const std::size_t in_chw = static_cast<std::size_t>(s.d) * in_hw;
    const std::size_t out_hw = static_cast<std::size_t>(s.oh) * s.ow;
    const std::size_t out_chw = static_cast<std::size_t>(s.od) * out_hw;
    const std::size_t k_hw = static_cast<std::size_t>(g.kh) * g.kw;
    const std::size_t k_chw = static_cast<std::size_t>(g.kd) * k_hw;

    const double* in_base = input.data.data();
    const double* w_base = weights.data.data();
    double* out_base = out.data.data();

    constexpr int kMaxK = 16;
    require(g.kw <= kMaxK, "conv3d: kernel width > " + std::to_string(kMaxK) + " unsupported");
    int lo_w[kMaxK], hi_w[kMaxK];
    for (int kw = 0; kw < g.kw; ++kw) valid_out_range(kw, g.pw, g.sw, s.w, s.ow, lo_w[kw], hi_w[kw]);

    const FwdRowFn fwd_row = g.sw == 1 ? fwd_row_for(g.kw) : nullptr;
    const FwdBlockFn fwd_block = (g.sw == 1 && g.sh == 1 && g.kh == g.kw) ? fwd_block_for(g.kw) : nullptr;

    // One (n, f) plane per task; each output element is accumulated by exactly
    // one thread in a fixed (c, kd, kh, kw) traversal, so results do not depend
    // on the thread count (they differ from the serial reference only at
    // rounding level, from register accumulation and FMA contraction).
#   pragma omp parallel for schedule(static)
    for (long long nf = 0; nf < static_cast<long long>(s.n) * s.f; ++nf) {
        const int n = static_cast<int>(nf / s.f);
        const int f = static_cast<int>(nf % s.f);
        double* out_plane = out_base + (static_cast<std::size_t>(n) * s.f + f) * out_chw;
        const double b = bias.data[static_cast<std::size_t>(f)];
        for (std::size_t i = 0; i < out_chw; ++i) out_plane[i] = b;

        for (int c = 0; c < s.c; ++c) {
            const double* in_plane = in_base + (static_cast<std::size_t>(n) * s.c + c) * in_chw;
            const double* w_plane = w_base + (static_cast<std::size_t>(f) * s.c + c) * k_chw;
            if (fwd_block) {
                for (int kd = 0; kd < g.kd; ++kd) {
                    const double* wk = w_plane + kd * k_hw;
                    for (int od = 0; od < s.od; ++od) {
                        const int id = od * g.sd - g.pd + kd;
                        if (id < 0 || id >= s.d) continue;
                        const double* in_d = in_plane + id * in_hw;
                        for (int oh = 0; oh < s.oh; ++oh) {
                            double* __restrict__ out_row =
                                out_plane + od * out_hw + static_cast<std::size_t>(oh) * s.ow;
                            const int kh_lo = std::max(0, g.ph - oh);
                            const int kh_hi = std::min(g.kh, s.h + g.ph - oh);
                            if (kh_hi - kh_lo == g.kh) {
                                fwd_block(out_row, in_d + static_cast<std::size_t>(oh - g.ph) * s.w, s.w, wk,
                                          s.ow, s.w, g.pw);
                            } else {
                                for (int kh = kh_lo; kh < kh_hi; ++kh)
                                    fwd_row(out_row, in_d + static_cast<std::size_t>(oh - g.ph + kh) * s.w,
                                            wk + static_cast<std::size_t>(kh) * g.kw, s.ow, s.w, g.pw);
                            }
                        }
                    }
                }
                continue;
            }
            for (int kd = 0; kd < g.kd; ++kd)
                for (int kh = 0; kh < g.kh; ++kh)
                    for (int od = 0; od < s.od; ++od) {
                        const int id = od * g.sd - g.pd + kd;
                        if (id < 0 || id >= s.d) continue;
                        for (int oh = 0; oh < s.oh; ++oh) {
                            const int ih = oh * g.sh - g.ph + kh;
                            if (ih < 0 || ih >= s.h) continue;
                            double* __restrict__ out_row = out_plane + od * out_hw + static_cast<std::size_t>(oh) * s.ow;
                            const double* __restrict__ in_row = in_plane + id * in_hw + static_cast<std::size_t>(ih) * s.w;
                            const double* w_row = w_plane + kd * k_hw + static_cast<std::size_t>(kh) * g.kw;
                            if (fwd_row) {
                                fwd_row(out_row, in_row, w_row, s.ow, s.w, g.pw);
                                continue;
                            }
                            for (int kw = 0; kw < g.kw; ++kw) {
                                const int lo = lo_w[kw], hi = hi_w[kw];
                                const double wv = w_row[kw];
                                const double* src = in_row - g.pw + kw;
                                if (g.sw == 1) {  // unit stride vectorizes
                                    for (int ow = lo; ow < hi; ++ow) out_row[ow] += wv * src[ow];
                                } else {
                                    for (int ow = lo; ow < hi; ++ow) out_row[ow] += wv * src[ow * g.sw];
                                }
                            }
                        }
                    }
        }
    }
    return out;
}

void conv3d_backward(const Tensor& upstream, const Tensor& input, const Tensor& weights, const Conv3dGeom& g,
                     Tensor* input_grad, Tensor& weight_grad, Tensor& bias_grad) {
    const ConvShapes s = conv_shapes(input, weights, Tensor({weights.dim(0)}), g);
    require(upstream.shape == std::vector<int>({s.n, s.f, s.od, s.oh, s.ow}),
            "conv3d backward: upstream shape " + shape_string(upstream.shape) + " mismatch");

    weight_grad = Tensor(weights.shape);
    bias_grad = Tensor({s.f});

    const std::size_t in_hw = static_cast<std::size_t>(s.h) * s.w;
    const std::size_t in_chw = static_cast<std::size_t>(s.d) * in_hw;
    const std::size_t out_hw = static_cast<std::size_t>(s.oh) * s.ow;
    const std::size_t out_chw = static_cast<std::size_t>(s.od) * out_hw;
    const std::size_t k_hw = static_cast<std::size_t>(g.kh) * g.kw;
    const std::size_t k_chw = static_cast<std::size_t>(g.kd) * k_hw;

    const double* up_base = upstream.data.data();
    const double* in_base = input.data.data();
    const double* w_base = weights.data.data();

    // bias: sum of upstream per filter
    for (int n = 0; n < s.n; ++n)
        for (int f = 0; f < s.f; ++f) {
            const double* up_plane = up_base + (static_cast<std::size_t>(n) * s.f + f) * out_chw;
            double acc = 0.0;
            for (std::size_t i = 0; i < out_chw; ++i) acc += up_plane[i];
            bias_grad.data[static_cast<std::size_t>(f)] += acc;
        }

    // weights: independent per filter, parallel over f. Unit-stride kernels
    // accumulate each tap into eight fixed vector lanes plus a scalar tail,
    // folded together in a fixed order at the end of each (kd, kh) slice;
    // strided kernels use one scalar chain per tap. Both orders are fully
    // deterministic but differ from the serial reference at rounding level.
    constexpr int kMaxK = 16;
    require(g.kw <= kMaxK, "conv3d backward: kernel width > " + std::to_string(kMaxK) + " unsupported");
    int lo_w[kMaxK], hi_w[kMaxK];
    int lo_all = 0, hi_all = s.ow;
    for (int kw = 0; kw < g.kw; ++kw) {
        valid_out_range(kw, g.pw, g.sw, s.w, s.ow, lo_w[kw], hi_w[kw]);
        lo_all = std::max(lo_all, lo_w[kw]);
        hi_all = std::min(hi_all, hi_w[kw]);
    }
    hi_all = std::max(hi_all, lo_all);  // degenerate widths: no common interior

#   pragma omp parallel for schedule(static)
    for (int f = 0; f < s.f; ++f) {
        double* wg_f = weight_grad.data.data() + static_cast<std::size_t>(f) * s.c * k_chw;
        for (int n = 0; n < s.n; ++n) {
            const double* up_plane = up_base + (static_cast<std::size_t>(n) * s.f + f) * out_chw;
            for (int c = 0; c < s.c; ++c) {
                const double* in_plane = in_base + (static_cast<std::size_t>(n) * s.c + c) * in_chw;
                double* wg_row = wg_f + static_cast<std::size_t>(c) * k_chw;
                for (int kd = 0; kd < g.kd; ++kd)
                    for (int kh = 0; kh < g.kh; ++kh) {
                        if (g.sw == 1) {
                            double lane[kMaxK][8] = {};
                            double tail[kMaxK] = {};
                            for (int od = 0; od < s.od; ++od) {
                                const int id = od * g.sd - g.pd + kd;
                                if (id < 0 || id >= s.d) continue;
                                for (int oh = 0; oh < s.oh; ++oh) {
                                    const int ih = oh * g.sh - g.ph + kh;
                                    if (ih < 0 || ih >= s.h) continue;
                                    const double* __restrict__ up_row =
                                        up_plane + od * out_hw + static_cast<std::size_t>(oh) * s.ow;
                                    const double* in_row =
                                        in_plane + id * in_hw + static_cast<std::size_t>(ih) * s.w;
                                    for (int kw = 0; kw < g.kw; ++kw) {
                                        const double* __restrict__ src = in_row - g.pw + kw;
                                        double* __restrict__ ln = lane[kw];
                                        const int hi = hi_w[kw];
                                        int ow = lo_w[kw];
                                        for (; ow + 8 <= hi; ow += 8)
#pragma omp simd
                                            for (int l = 0; l < 8; ++l) ln[l] += up_row[ow + l] * src[ow + l];
                                        for (; ow < hi; ++ow) tail[kw] += up_row[ow] * src[ow];
                                    }
                                }
                            }
                            for (int kw = 0; kw < g.kw; ++kw) {
                                double sum = tail[kw];
                                for (int l = 0; l < 8; ++l) sum += lane[kw][l];
                                wg_row[kd * k_hw + static_cast<std::size_t>(kh) * g.kw + kw] += sum;
                            }
                            continue;
                        }
                        double acc[kMaxK] = {};
                        for (int od = 0; od < s.od; ++od) {
                            const int id = od * g.sd - g.pd + kd;
                            if (id < 0 || id >= s.d) continue;
                            for (int oh = 0; oh < s.oh; ++oh) {
                                const int ih = oh * g.sh - g.ph + kh;
                                if (ih < 0 || ih >= s.h) continue;
                                const double* __restrict__ up_row =
                                    up_plane + od * out_hw + static_cast<std::size_t>(oh) * s.ow;
                                const double* __restrict__ in_row =
                                    in_plane + id * in_hw + static_cast<std::size_t>(ih) * s.w;
                                for (int kw = 0; kw < g.kw; ++kw) {
                                    const double* src = in_row - g.pw + kw;
                                    for (int ow = lo_w[kw]; ow < std::min(lo_all, hi_w[kw]); ++ow)
                                        acc[kw] += up_row[ow] * src[ow * g.sw];
                                }
                                if (g.kw == 3) {
                                    const double* src = in_row - g.pw;
                                    for (int ow = lo_all; ow < hi_all; ++ow) {
                                        const double u = up_row[ow];
                                        const double* p = src + ow * g.sw;
                                        acc[0] += u * p[0];
                                        acc[1] += u * p[1];
                                        acc[2] += u * p[2];
                                    }
                                } else {
                                    const double* src = in_row - g.pw;
                                    for (int ow = lo_all; ow < hi_all; ++ow) {
                                        const double u = up_row[ow];
                                        const double* p = src + ow * g.sw;
                                        for (int kw = 0; kw < g.kw; ++kw) acc[kw] += u * p[kw];
                                    }
                                }
                                for (int kw = 0; kw < g.kw; ++kw) {
                                    const double* src = in_row - g.pw + kw;
                                    for (int ow = std::max(hi_all, lo_w[kw]); ow < hi_w[kw]; ++ow)
                                        acc[kw] += up_row[ow] * src[ow * g.sw];
                                }
                            }
                        }
                        for (int kw = 0; kw < g.kw; ++kw)
                            wg_row[kd * k_hw + static_cast<std::size_t>(kh) * g.kw + kw] += acc[kw];
                    }
            }
        }
    }

    if (input_grad == nullptr) return;
    *input_grad = Tensor(input.shape);
    double* ig_base = input_grad->data.data();

    const IgradRowFn igrad_row = g.sw == 1 ? igrad_row_for(g.kw) : nullptr;
    const IgradBlockFn igrad_block =
        (g.sw == 1 && g.sh == 1 && g.kh == g.kw) ? igrad_block_for(g.kw) : nullptr;

    // input: scatter per sample, parallel over n (disjoint writes)
#   pragma omp parallel for schedule(static)
    for (int n = 0; n < s.n; ++n) {
        double* ig_sample = ig_base + static_cast<std::size_t>(n) * s.c * in_chw;
        for (int f = 0; f < s.f; ++f) {
            const double* up_plane = up_base + (static_cast<std::size_t>(n) * s.f + f) * out_chw;
            for (int c = 0; c < s.c; ++c) {
                double* ig_plane = ig_sample + static_cast<std::size_t>(c) * in_chw;
                const double* w_plane = w_base + (static_cast<std::size_t>(f) * s.c + c) * k_chw;
                if (igrad_block) {
                    // Gather formulation over input rows: row ih receives the
                    // kh taps from upstream rows oh = ih + ph - kh, which
                    // covers the same (oh, kh) pairs as the scatter loop.
                    for (int kd = 0; kd < g.kd; ++kd) {
                        const double* wk = w_plane + kd * k_hw;
                        for (int od = 0; od < s.od; ++od) {
                            const int id = od * g.sd - g.pd + kd;
                            if (id < 0 || id >= s.d) continue;
                            const double* up_d = up_plane + od * out_hw;
                            double* ig_d = ig_plane + id * in_hw;
                            for (int ih = 0; ih < s.h; ++ih) {
                                double* __restrict__ ig_row = ig_d + static_cast<std::size_t>(ih) * s.w;
                                const int kh_lo = std::max(0, ih + g.ph - s.oh + 1);
                                const int kh_hi = std::min(g.kh, ih + g.ph + 1);
                                if (kh_hi - kh_lo == g.kh) {
                                    igrad_block(ig_row, up_d + static_cast<std::size_t>(ih + g.ph) * s.ow,
                                                static_cast<std::size_t>(s.ow), wk, s.w, s.ow, g.pw);
                                } else {
                                    for (int kh = kh_lo; kh < kh_hi; ++kh)
                                        igrad_row(ig_row,
                                                  up_d + static_cast<std::size_t>(ih + g.ph - kh) * s.ow,
                                                  wk + static_cast<std::size_t>(kh) * g.kw, s.w, s.ow, g.pw);
                                }
                            }
                        }
                    }
                    continue;
                }
                for (int kd = 0; kd < g.kd; ++kd)
                    for (int kh = 0; kh < g.kh; ++kh)
                        for (int od = 0; od < s.od; ++od) {
                            const int id = od * g.sd - g.pd + kd;
                            if (id < 0 || id >= s.d) continue;
                            for (int oh = 0; oh < s.oh; ++oh) {
                                const int ih = oh * g.sh - g.ph + kh;
                                if (ih < 0 || ih >= s.h) continue;
                                const double* __restrict__ up_row =
                                    up_plane + od * out_hw + static_cast<std::size_t>(oh) * s.ow;
                                double* __restrict__ ig_row = ig_plane + id * in_hw + static_cast<std::size_t>(ih) * s.w;
                                const double* w_row = w_plane + kd * k_hw + static_cast<std::size_t>(kh) * g.kw;
                                if (igrad_row) {
                                    igrad_row(ig_row, up_row, w_row, s.w, s.ow, g.pw);
                                    continue;
                                }
                                for (int kw = 0; kw < g.kw; ++kw) {
                                    const int lo = lo_w[kw], hi = hi_w[kw];
                                    const double wv = w_row[kw];
                                    double* dst = ig_row - g.pw + kw;
                                    if (g.sw == 1) {  // unit stride vectorizes
                                        for (int ow = lo; ow < hi; ++ow) dst[ow] += wv * up_row[ow];
                                    } else {
                                        for (int ow = lo; ow < hi; ++ow) dst[ow * g.sw] += wv * up_row[ow];
                                    }
                                }
                            }
                        }
            }
        }
    }
}

Tensor leaky_relu_forward(const Tensor& input, double slope) {
    Tensor out(input.shape);
    for (std::size_t i = 0; i < input.data.size(); ++i) {
        const double x = input.data[i];
        out.data[i] = x >= 0.0 ? x : slope * x;
    }
    return out;
}

Tensor leaky_relu_backward(const Tensor& upstream, const Tensor& input, double slope) {
    require(upstream.shape == input.shape, "leaky_relu backward: shape mismatch");
    Tensor grad(input.shape);
    for (std::size_t i = 0; i < input.data.size(); ++i)
        grad.data[i] = upstream.data[i] * (input.data[i] >= 0.0 ? 1.0 : slope);
    return grad;
}

Tensor global_pool_forward(const Tensor& input, PoolMode mode) {
    require(input.rank() == 5, "global_pool: input must be rank 5, got " + shape_string(input.shape));
    const int n = input.dim(0), c = input.dim(1);
    const std::size_t spatial = static_cast<std::size_t>(input.dim(2)) * input.dim(3) * input.dim(4);
    Tensor out({n, c});
    for (int i = 0; i < n * c; ++i) {
        const double* plane = input.data.data() + static_cast<std::size_t>(i) * spatial;
        if (mode == PoolMode::Max) {
            double m = plane[0];
            for (std::size_t j = 1; j < spatial; ++j) m = std::max(m, plane[j]);
            out.data[static_cast<std::size_t>(i)] = m;
        } else {
            double acc = 0.0;
            for (std::size_t j = 0; j < spatial; ++j) acc += plane[j];
            out.data[static_cast<std::size_t>(i)] = acc / static_cast<double>(spatial);
        }
    }
    return out;
}

Tensor global_pool_backward(const Tensor& upstream, const Tensor& input, PoolMode mode) {
    const int n = input.dim(0), c = input.dim(1);
    require(upstream.shape == std::vector<int>({n, c}), "global_pool backward: upstream shape mismatch");
    const std::size_t spatial = static_cast<std::size_t>(input.dim(2)) * input.dim(3) * input.dim(4);
    Tensor grad(input.shape);
    for (int i = 0; i < n * c; ++i) {
        const double* plane = input.data.data() + static_cast<std::size_t>(i) * spatial;
        double* gplane = grad.data.data() + static_cast<std::size_t>(i) * spatial;
        const double up = upstream.data[static_cast<std::size_t>(i)];
        if (mode == PoolMode::Max) {
            std::size_t arg = 0;  // first argmax in scan order
            for (std::size_t j = 1; j < spatial; ++j)
                if (plane[j] > plane[arg]) arg = j;
            gplane[arg] = up;
        } else {
            const double share = up / static_cast<double>(spatial);
            for (std::size_t j = 0; j < spatial; ++j) gplane[j] = share;
        }
    }
    return grad;
}

Tensor fully_connected_forward(const Tensor& input, const Tensor& weights, const Tensor& bias) {
    require(input.rank() == 2, "fully_connected: input must be rank 2, got " + shape_string(input.shape));
    const int n = input.dim(0), in_dim = input.dim(1);
    require(weights.rank() == 2 && weights.dim(0) == in_dim,
            "fully_connected: weights must be [" + std::to_string(in_dim) + ", out], got " +
                shape_string(weights.shape));
    const int out_dim = weights.dim(1);
    require(bias.rank() == 1 && bias.dim(0) == out_dim, "fully_connected: bias length mismatch");

    Tensor out({n, out_dim});
    for (int r = 0; r < n; ++r) {
        const double* x = input.data.data() + static_cast<std::size_t>(r) * in_dim;
        double* y = out.data.data() + static_cast<std::size_t>(r) * out_dim;
        for (int o = 0; o < out_dim; ++o) y[o] = bias.data[static_cast<std::size_t>(o)];
        for (int i = 0; i < in_dim; ++i) {
            const double xv = x[i];
            const double* wr = weights.data.data() + static_cast<std::size_t>(i) * out_dim;
            for (int o = 0; o < out_dim; ++o) y[o] += xv * wr[o];
        }
    }
    return out;
}

void fully_connected_backward(const Tensor& upstream, const Tensor& input, const Tensor& weights,
                              Tensor& input_grad, Tensor& weight_grad, Tensor& bias_grad) {
    const int n = input.dim(0), in_dim = input.dim(1), out_dim = weights.dim(1);
    require(upstream.shape == std::vector<int>({n, out_dim}), "fully_connected backward: upstream shape mismatch");

    input_grad = Tensor(input.shape);
    weight_grad = Tensor(weights.shape);
    bias_grad = Tensor({out_dim});

    for (int r = 0; r < n; ++r) {
        const double* up = upstream.data.data() + static_cast<std::size_t>(r) * out_dim;
        const double* x = input.data.data() + static_cast<std::size_t>(r) * in_dim;
        double* xg = input_grad.data.data() + static_cast<std::size_t>(r) * in_dim;
        for (int o = 0; o < out_dim; ++o) bias_grad.data[static_cast<std::size_t>(o)] += up[o];
        for (int i = 0; i < in_dim; ++i) {
            const double* wr = weights.data.data() + static_cast<std::size_t>(i) * out_dim;
            double* wg = weight_grad.data.data() + static_cast<std::size_t>(i) * out_dim;
            double acc = 0.0;
            const double xv = x[i];
            for (int o = 0; o < out_dim; ++o) {
                acc += up[o] * wr[o];
                wg[o] += xv * up[o];
            }
            xg[i] = acc;
        }
    }
}

Tensor sigmoid_forward(const Tensor& input) {
    Tensor out(input.shape);
    for (std::size_t i = 0; i < input.data.size(); ++i) out.data[i] = 1.0 / (1.0 + std::exp(-input.data[i]));
    return out;
}

Tensor sigmoid_backward(const Tensor& upstream, const Tensor& output) {
    require(upstream.shape == output.shape, "sigmoid backward: shape mismatch");
    Tensor grad(output.shape);
    for (std::size_t i = 0; i < output.data.size(); ++i) {
        const double y = output.data[i];
        grad.data[i] = upstream.data[i] * y * (1.0 - y);
    }
    return grad;
}

Tensor softmax_forward(const Tensor& input) {
    require(input.rank() == 2, "softmax: input must be rank 2, got " + shape_string(input.shape));
    const int n = input.dim(0), k = input.dim(1);
    Tensor out({n, k});
    for (int r = 0; r < n; ++r) {
        const double* x = input.data.data() + static_cast<std::size_t>(r) * k;
        double* y = out.data.data() + static_cast<std::size_t>(r) * k;
        double m = x[0];
        for (int i = 1; i < k; ++i) m = std::max(m, x[i]);
        double z = 0.0;
        for (int i = 0; i < k; ++i) {
            y[i] = std::exp(x[i] - m);
            z += y[i];
        }
        for (int i = 0; i < k; ++i) y[i] /= z;
    }
    return out;
}

Tensor softmax_backward(const Tensor& upstream, const Tensor& output) {
    require(upstream.shape == output.shape, "softmax backward: shape mismatch");
    const int n = output.dim(0), k = output.dim(1);
    Tensor grad({n, k});
    for (int r = 0; r < n; ++r) {
        const double* y = output.data.data() + static_cast<std::size_t>(r) * k;
        const double* up = upstream.data.data() + static_cast<std::size_t>(r) * k;
        double dot = 0.0;
        for (int i = 0; i < k; ++i) dot += up[i] * y[i];
        double* g = grad.data.data() + static_cast<std::size_t>(r) * k;
        for (int i = 0; i < k; ++i) g[i] = y[i] * (up[i] - dot);
    }
    return grad;
}

Tensor concat_forward(const Tensor& a, const Tensor& b) {
    require(a.rank() == 2 && b.rank() == 2 && a.dim(0) == b.dim(0),
            "concat: inputs must be rank 2 with equal batch, got " + shape_string(a.shape) + " and " +
                shape_string(b.shape));
    const int n = a.dim(0), wa = a.dim(1), wb = b.dim(1);
    Tensor out({n, wa + wb});
    for (int r = 0; r < n; ++r) {
        double* y = out.data.data() + static_cast<std::size_t>(r) * (wa + wb);
        const double* xa = a.data.data() + static_cast<std::size_t>(r) * wa;
        const double* xb = b.data.data() + static_cast<std::size_t>(r) * wb;
        std::copy(xa, xa + wa, y);
        std::copy(xb, xb + wb, y + wa);
    }
    return out;
}

void concat_backward(const Tensor& upstream, int a_width, Tensor& a_grad, Tensor& b_grad) {
    require(upstream.rank() == 2 && a_width >= 1 && a_width < upstream.dim(1), "concat backward: bad a_width");
    const int n = upstream.dim(0), total = upstream.dim(1), wb = total - a_width;
    a_grad = Tensor({n, a_width});
    b_grad = Tensor({n, wb});
    for (int r = 0; r < n; ++r) {
        const double* up = upstream.data.data() + static_cast<std::size_t>(r) * total;
        std::copy(up, up + a_width, a_grad.data.data() + static_cast<std::size_t>(r) * a_width);
        std::copy(up + a_width, up + total, b_grad.data.data() + static_cast<std::size_t>(r) * wb);
    }
}

Tensor multiply_broadcast_forward(const Tensor& gate, const Tensor& activations) {
    require(activations.rank() == 5, "multiply_broadcast: activations must be rank 5");
    const int n = activations.dim(0), c = activations.dim(1);
    require(gate.shape == std::vector<int>({n, c}),
            "multiply_broadcast: gate must be [N,C] = [" + std::to_string(n) + "," + std::to_string(c) + "], got " +
                shape_string(gate.shape));
    const std::size_t spatial = static_cast<std::size_t>(activations.dim(2)) * activations.dim(3) * activations.dim(4);
    Tensor out(activations.shape);
    for (int i = 0; i < n * c; ++i) {
        const double gv = gate.data[static_cast<std::size_t>(i)];
        const double* a = activations.data.data() + static_cast<std::size_t>(i) * spatial;
        double* y = out.data.data() + static_cast<std::size_t>(i) * spatial;
        for (std::size_t j = 0; j < spatial; ++j) y[j] = gv * a[j];
    }
    return out;
}

void multiply_broadcast_backward(const Tensor& upstream, const Tensor& gate, const Tensor& activations,
                                 Tensor& gate_grad, Tensor& act_grad) {
    require(upstream.shape == activations.shape, "multiply_broadcast backward: shape mismatch");
    const int n = activations.dim(0), c = activations.dim(1);
    const std::size_t spatial = static_cast<std::size_t>(activations.dim(2)) * activations.dim(3) * activations.dim(4);
    gate_grad = Tensor(gate.shape);
    act_grad = Tensor(activations.shape);
    for (int i = 0; i < n * c; ++i) {
        const double gv = gate.data[static_cast<std::size_t>(i)];
        const double* a = activations.data.data() + static_cast<std::size_t>(i) * spatial;
        const double* up = upstream.data.data() + static_cast<std::size_t>(i) * spatial;
        double* ag = act_grad.data.data() + static_cast<std::size_t>(i) * spatial;
        double acc = 0.0;
        for (std::size_t j = 0; j < spatial; ++j) {
            acc += up[j] * a[j];
            ag[j] = up[j] * gv;
        }
        gate_grad.data[static_cast<std::size_t>(i)] = acc;
    }
}

Tensor flatten_forward(const Tensor& input) {
    require(input.rank() >= 2, "flatten: input must have a batch dimension");
    Tensor out = input;
    int rest = 1;
    for (int i = 1; i < input.rank(); ++i) rest *= input.dim(i);
    out.shape = {input.dim(0), rest};
    return out;
}

double cross_entropy_loss(const Tensor& probs, const Tensor& targets) {
    require(probs.rank() == 2 && probs.shape == targets.shape,
            "cross_entropy: probs/targets must be matching rank-2 tensors");
    const int n = probs.dim(0), k = probs.dim(1);
    double total = 0.0;
    for (int r = 0; r < n; ++r) {
        const double* p = probs.data.data() + static_cast<std::size_t>(r) * k;
        const double* t = targets.data.data() + static_cast<std::size_t>(r) * k;
        double row_sum = 0.0;
        for (int i = 0; i < k; ++i) row_sum += p[i];
        if (std::abs(row_sum - 1.0) > 1e-9)
            throw InternalError("cross_entropy: row " + std::to_string(r) + " not normalized (sum=" +
                                std::to_string(row_sum) + ")");
        for (int i = 0; i < k; ++i) total -= t[i] * std::log(std::max(p[i], 1e-12));
    }
    return total / static_cast<double>(n);
}

Tensor cross_entropy_backward(const Tensor& probs, const Tensor& targets) {
    const int n = probs.dim(0), k = probs.dim(1);
    Tensor grad({n, k});
    for (int r = 0; r < n; ++r) {
        const double* p = probs.data.data() + static_cast<std::size_t>(r) * k;
        const double* t = targets.data.data() + static_cast<std::size_t>(r) * k;
        double* g = grad.data.data() + static_cast<std::size_t>(r) * k;
        for (int i = 0; i < k; ++i) g[i] = -t[i] / (std::max(p[i], 1e-12) * static_cast<double>(n));
    }
    return grad;
}

void SgdmState::init(const std::vector<Tensor*>& params) {
    velocity.clear();
    velocity.reserve(params.size());
    for (const Tensor* p : params) velocity.emplace_back(p->data.size(), 0.0);
}

void sgdm_step(std::vector<Tensor*>& params, SgdmState& state) {
    if (state.velocity.size() != params.size()) throw InternalError("sgdm_step: velocity/parameter count mismatch");
    for (std::size_t t = 0; t < params.size(); ++t) {
        Tensor& p = *params[t];
        std::vector<double>& v = state.velocity[t];
        if (v.size() != p.data.size() || p.grad.size() != p.data.size())
            throw InternalError("sgdm_step: length mismatch on parameter " + std::to_string(t));
        for (std::size_t i = 0; i < v.size(); ++i) {
            v[i] = state.momentum * v[i] + p.grad[i];
            p.data[i] -= state.learning_rate * v[i];
        }
    }
}

}  // namespace voxatn::tengine
