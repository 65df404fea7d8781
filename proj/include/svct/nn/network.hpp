#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "svct/image.hpp"
#include "svct/nn/layers.hpp"
#include "svct/nn/tensor.hpp"
#include "svct/random.hpp"

namespace svct::nn {

enum class LearningMode { residual, image };

const char* to_string(LearningMode mode) noexcept;
LearningMode parse_learning_mode(const std::string& text);

struct NetSpec {
    std::size_t stages = 3;
    std::size_t base_channels = 8;
    bool multi_scale = true;
    LearningMode mode = LearningMode::residual;

    static constexpr std::size_t kernel = 3;
    static constexpr std::size_t convs_per_stage = 4;
    static constexpr std::size_t last_stage_convs = 2;

    void validate() const;
    // Spatial sizes must be multiples of this.
    std::size_t size_multiple() const noexcept;
    friend bool operator==(const NetSpec&, const NetSpec&) = default;
};

// Number of conv-BN-ReLU units in the multi-scale layout; the single-scale
// network uses the same count.
std::size_t unit_count(const NetSpec& spec);

// Constant width of the single-scale variant whose parameter count is closest
// to the multi-scale network with the same stages/base channels.
std::size_t single_scale_width(const NetSpec& spec);

// Closed-form count of learnable parameters (conv weights, BN affine, head).
std::size_t parameter_count(const NetSpec& spec);

// Receptive field of one output pixel, widest over input alignments.
std::size_t receptive_field(const NetSpec& spec);

struct Param {
    std::span<double> value;
    std::span<double> grad;
    bool decayed = false;
};

class Network {
public:
    Network() = default;
    Network(const NetSpec& spec, std::uint64_t seed);

    const NetSpec& spec() const noexcept { return spec_; }

    Tensor4 forward(const Tensor4& x, Mode mode);
    // Backpropagates through the last forward call, accumulating gradients.
    void backward(const Tensor4& dout);
    void zero_grad();

    std::vector<Param> parameters();
    std::size_t parameter_count() const;

    // Training labels are multiplied by this; inference divides it back out.
    double target_scale() const noexcept { return target_scale_; }
    void set_target_scale(double scale);

    // Flattened state: parameters, BN running statistics, target scale.
    std::vector<double> state() const;
    void load_state(std::span<const double> state);
    std::size_t state_size() const;

    // Hash of the ReLU activity pattern and pooling choices of the last
    // forward. Equal signatures mean the same piecewise-linear region.
    std::uint64_t kink_signature() const;

private:
    struct Unit {
        Tensor4 weight, dweight;
        BatchNorm bn;
        Tensor4 input, output;

        Tensor4 forward(const Tensor4& x, Mode mode);
        Tensor4 backward(const Tensor4& dout);
    };

    static Unit make_unit(std::size_t in, std::size_t out, Rng& rng);
    template <class Fn>
    void for_each_unit(Fn&& fn);
    template <class Fn>
    void for_each_unit(Fn&& fn) const;

    NetSpec spec_;
    std::vector<std::vector<Unit>> encoder_;
    // decoder_[k] serves scale stages - 2 - k.
    std::vector<std::vector<Unit>> decoder_;
    std::vector<MaxPoolResult> pools_;
    std::vector<Shape4> pool_inputs_;
    std::vector<std::size_t> up_channels_;
    Tensor4 head_weight_, head_dweight_;
    std::vector<double> head_bias_, head_dbias_;
    Tensor4 head_input_;
    double target_scale_ = 1.0;
};

struct LossResult {
    double loss = 0.0;
    double data_term = 0.0;
    double decay_term = 0.0;
};

// Loss = 0.5 * mean((f(x) - y)^2) + 0.5 * weight_decay * sum(conv weights^2).
// Leaves the exact gradient in the network's parameter gradients. Throws
// diverged on a non-finite loss.
LossResult forward_backward(Network& net, const Tensor4& x, const Tensor4& y,
                            double weight_decay, Mode mode = Mode::train);

// Residual mode returns img - net(img) / scale; image mode returns net(img) / scale.
// Rejects sizes that are not multiples of the spec's size_multiple().
Image infer(Network& net, const Image& img);

Tensor4 to_tensor(const Image& img);
Image to_image(const Tensor4& t);

}  // namespace svct::nn
