#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "svct/nn/tensor.hpp"

namespace svct::nn {

// ---- convolution -----------------------------------------------------------

// Zero-padded "same" cross-correlation. weight is (out_ch, in_ch, k, k) with
// k in {1, 3}; bias is empty or out_ch long.
Tensor4 conv2d_forward(const Tensor4& x, const Tensor4& weight, std::span<const double> bias);

struct Conv2dGrads {
    Tensor4 dx;
    Tensor4 dweight;
    std::vector<double> dbias;
};

Conv2dGrads conv2d_backward(const Tensor4& x, const Tensor4& weight, const Tensor4& dout,
                            bool with_bias);

// ---- batch normalization ---------------------------------------------------

enum class Mode { train, eval };

class BatchNorm {
public:
    static constexpr double default_eps = 1e-5;
    static constexpr double default_momentum = 0.9;

    explicit BatchNorm(std::size_t channels = 0, double eps = default_eps,
                       double momentum = default_momentum);

    std::size_t channels() const noexcept { return gamma.size(); }

    // Train mode normalizes with batch statistics and folds them into the
    // running estimates: running = momentum * running + (1 - momentum) * batch.
    // Eval mode uses the running estimates and throws uninitialized_stats
    // before the first train-mode call.
    Tensor4 forward(const Tensor4& x, Mode mode);
    // Gradient w.r.t. the input of the last forward; accumulates dgamma/dbeta.
    Tensor4 backward(const Tensor4& dout);

    bool has_running_stats() const noexcept { return initialized; }

    std::vector<double> gamma, beta;
    std::vector<double> dgamma, dbeta;
    std::vector<double> running_mean, running_var;
    bool initialized = false;

private:
    double eps_;
    double momentum_;
    Mode last_mode_ = Mode::train;
    Tensor4 xhat_;
    std::vector<double> inv_std_;
};

// ---- pointwise / resampling ------------------------------------------------

Tensor4 relu_forward(const Tensor4& x);
// Gradient through relu given the forward *output*.
Tensor4 relu_backward(const Tensor4& y, const Tensor4& dout);

struct MaxPoolResult {
    Tensor4 out;
    // Flat index into the input tensor of each output's maximum.
    std::vector<std::uint32_t> argmax;
};

// 2x2 window, stride 2. Throws shape_mismatch for odd spatial sizes.
MaxPoolResult maxpool2x2_forward(const Tensor4& x);
Tensor4 maxpool2x2_backward(const Shape4& input_shape, const std::vector<std::uint32_t>& argmax,
                            const Tensor4& dout);

// 2x2 average pooling (sum / 4).
Tensor4 avg_pool2x2(const Tensor4& x);
// Adjoint of avg_pool2x2: each value is spread over its 2x2 block times 1/4.
Tensor4 avg_unpool2x2(const Tensor4& x);

Tensor4 concat_channels(const Tensor4& a, const Tensor4& b);
// Splits a gradient of concat_channels(a, b) back into the parts for a and b.
void split_channels(const Tensor4& d, std::size_t channels_a, Tensor4& da, Tensor4& db);

}  // namespace svct::nn
