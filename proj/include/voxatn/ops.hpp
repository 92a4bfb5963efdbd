#pragma once

#include <cstdint>
#include <vector>

#include "voxatn/tensor.hpp"

namespace voxatn::tengine {

struct Conv3dGeom {
    int kd = 1, kh = 1, kw = 1;  // filter size
    int sd = 1, sh = 1, sw = 1;  // stride
    int pd = 0, ph = 0, pw = 0;  // zero padding
};

// Output spatial size for one axis: floor((in + 2*pad - k)/stride) + 1.
int conv_out_dim(int in, int k, int stride, int pad);

// Cross-correlation of input [N,C,D,H,W] with weights [F,C,kd,kh,kw] plus
// per-filter bias, fixed summation order (c, kd, kh, kw) per output element.
// OpenMP-parallel over (n, f); results are independent of thread count.
// Register accumulation and FMA contraction make them agree with the serial
// reference only to rounding (~1e-12 relative), not bitwise.
Tensor conv3d_forward(const Tensor& input, const Tensor& weights, const Tensor& bias, const Conv3dGeom& g);

// Gradients of the forward contract. input_grad may be null (skipped for the
// first layer of a network). Deterministic and thread-count-invariant, but
// the accumulation order is blocked for speed, so results agree with the
// serial reference only to rounding (~1e-15 relative), not bitwise.
void conv3d_backward(const Tensor& upstream, const Tensor& input, const Tensor& weights, const Conv3dGeom& g,
                     Tensor* input_grad, Tensor& weight_grad, Tensor& bias_grad);

// Plain nested-loop reference kernels kept for testing and benchmarking.
namespace serial {
Tensor conv3d_forward(const Tensor& input, const Tensor& weights, const Tensor& bias, const Conv3dGeom& g);
void conv3d_backward(const Tensor& upstream, const Tensor& input, const Tensor& weights, const Conv3dGeom& g,
                     Tensor* input_grad, Tensor& weight_grad, Tensor& bias_grad);
}  // namespace serial

Tensor leaky_relu_forward(const Tensor& input, double slope);
Tensor leaky_relu_backward(const Tensor& upstream, const Tensor& input, double slope);

enum class PoolMode { Max, Avg };

// [N,C,D,H,W] -> [N,C]. Max backward routes to the first argmax in scan order.
Tensor global_pool_forward(const Tensor& input, PoolMode mode);
Tensor global_pool_backward(const Tensor& upstream, const Tensor& input, PoolMode mode);

// x [N,in] * W [in,out] + b [out]
Tensor fully_connected_forward(const Tensor& input, const Tensor& weights, const Tensor& bias);
void fully_connected_backward(const Tensor& upstream, const Tensor& input, const Tensor& weights,
                              Tensor& input_grad, Tensor& weight_grad, Tensor& bias_grad);

Tensor sigmoid_forward(const Tensor& input);
Tensor sigmoid_backward(const Tensor& upstream, const Tensor& output);

// Softmax over the last dimension, max-subtracted for stability.
Tensor softmax_forward(const Tensor& input);
Tensor softmax_backward(const Tensor& upstream, const Tensor& output);

// Concatenate [N,a] and [N,b] into [N,a+b].
Tensor concat_forward(const Tensor& a, const Tensor& b);
void concat_backward(const Tensor& upstream, int a_width, Tensor& a_grad, Tensor& b_grad);

// gate [N,C] broadcast-multiplied against activations [N,C,D,H,W].
Tensor multiply_broadcast_forward(const Tensor& gate, const Tensor& activations);
void multiply_broadcast_backward(const Tensor& upstream, const Tensor& gate, const Tensor& activations,
                                 Tensor& gate_grad, Tensor& act_grad);

// [N,C,D,H,W] -> [N,C*D*H*W]; backward is the inverse reshape.
Tensor flatten_forward(const Tensor& input);

// Mean over the batch of -sum(target * log(prob)), probs pre-softmaxed and
// row-normalized within 1e-9; log clamped at prob >= 1e-12.
double cross_entropy_loss(const Tensor& probs, const Tensor& targets);
Tensor cross_entropy_backward(const Tensor& probs, const Tensor& targets);

struct SgdmState {
    double learning_rate = 0.01;
    double momentum = 0.9;
    std::vector<std::vector<double>> velocity;  // one buffer per parameter tensor

    void init(const std::vector<Tensor*>& params);
};

// v <- momentum * v + grad; param <- param - lr * v
void sgdm_step(std::vector<Tensor*>& params, SgdmState& state);

}  // namespace voxatn::tengine
