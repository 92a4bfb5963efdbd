// Plain nested-loop convolution kernels. These are the reference the
// OpenMP versions are tested and benchmarked against.

#include "voxatn/ops.hpp"

namespace voxatn::tengine::serial {

Tensor conv3d_forward(const Tensor& input, const Tensor& weights, const Tensor& bias, const Conv3dGeom& g) {
    const int n = input.dim(0), c = input.dim(1), d = input.dim(2), h = input.dim(3), w = input.dim(4);
    const int f = weights.dim(0);
    const int od = conv_out_dim(d, g.kd, g.sd, g.pd);
    const int oh = conv_out_dim(h, g.kh, g.sh, g.ph);
    const int ow = conv_out_dim(w, g.kw, g.sw, g.pw);

    auto in_at = [&](int ni, int ci, int di, int hi, int wi) {
        return input.data[(((static_cast<std::size_t>(ni) * c + ci) * d + di) * h + hi) * w + wi];
    };
    auto w_at = [&](int fi, int ci, int a, int b, int e) {
        return weights.data[(((static_cast<std::size_t>(fi) * c + ci) * g.kd + a) * g.kh + b) * g.kw + e];
    };

    Tensor out({n, f, od, oh, ow});
    std::size_t o = 0;
    for (int ni = 0; ni < n; ++ni)
        for (int fi = 0; fi < f; ++fi)
            for (int zo = 0; zo < od; ++zo)
                for (int yo = 0; yo < oh; ++yo)
                    for (int xo = 0; xo < ow; ++xo, ++o) {
                        double acc = bias.data[static_cast<std::size_t>(fi)];
                        for (int ci = 0; ci < c; ++ci)
                            for (int kd = 0; kd < g.kd; ++kd)
                                for (int kh = 0; kh < g.kh; ++kh)
                                    for (int kw = 0; kw < g.kw; ++kw) {
                                        const int zi = zo * g.sd - g.pd + kd;
                                        const int yi = yo * g.sh - g.ph + kh;
                                        const int xi = xo * g.sw - g.pw + kw;
                                        if (zi < 0 || zi >= d || yi < 0 || yi >= h || xi < 0 || xi >= w) continue;
                                        acc += w_at(fi, ci, kd, kh, kw) * in_at(ni, ci, zi, yi, xi);
                                    }
                        out.data[o] = acc;
                    }
    return out;
}

void conv3d_backward(const Tensor& upstream, const Tensor& input, const Tensor& weights, const Conv3dGeom& g,
                     Tensor* input_grad, Tensor& weight_grad, Tensor& bias_grad) {
    const int n = input.dim(0), c = input.dim(1), d = input.dim(2), h = input.dim(3), w = input.dim(4);
    const int f = weights.dim(0);
    const int od = upstream.dim(2), oh = upstream.dim(3), ow = upstream.dim(4);

    weight_grad = Tensor(weights.shape);
    bias_grad = Tensor({f});
    if (input_grad) *input_grad = Tensor(input.shape);

    auto up_at = [&](int ni, int fi, int a, int b, int e) {
        return upstream.data[(((static_cast<std::size_t>(ni) * f + fi) * od + a) * oh + b) * ow + e];
    };
    auto in_idx = [&](int ni, int ci, int di, int hi, int wi) {
        return (((static_cast<std::size_t>(ni) * c + ci) * d + di) * h + hi) * w + wi;
    };
    auto w_idx = [&](int fi, int ci, int a, int b, int e) {
        return (((static_cast<std::size_t>(fi) * c + ci) * g.kd + a) * g.kh + b) * g.kw + e;
    };

    for (int ni = 0; ni < n; ++ni)
        for (int fi = 0; fi < f; ++fi)
            for (int zo = 0; zo < od; ++zo)
                for (int yo = 0; yo < oh; ++yo)
                    for (int xo = 0; xo < ow; ++xo) {
                        const double up = up_at(ni, fi, zo, yo, xo);
                        bias_grad.data[static_cast<std::size_t>(fi)] += up;
                        for (int ci = 0; ci < c; ++ci)
                            for (int kd = 0; kd < g.kd; ++kd)
                                for (int kh = 0; kh < g.kh; ++kh)
                                    for (int kw = 0; kw < g.kw; ++kw) {
                                        const int zi = zo * g.sd - g.pd + kd;
                                        const int yi = yo * g.sh - g.ph + kh;
                                        const int xi = xo * g.sw - g.pw + kw;
                                        if (zi < 0 || zi >= d || yi < 0 || yi >= h || xi < 0 || xi >= w) continue;
                                        weight_grad.data[w_idx(fi, ci, kd, kh, kw)] +=
                                            up * input.data[in_idx(ni, ci, zi, yi, xi)];
                                        if (input_grad)
                                            input_grad->data[in_idx(ni, ci, zi, yi, xi)] +=
                                                up * weights.data[w_idx(fi, ci, kd, kh, kw)];
                                    }
                    }
}

}  // namespace voxatn::tengine::serial
