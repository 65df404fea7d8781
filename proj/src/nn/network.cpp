#include "svct/nn/network.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "svct/error.hpp"

namespace svct::nn {

namespace {

std::size_t unit_params(std::size_t in, std::size_t out) {
    return NetSpec::kernel * NetSpec::kernel * in * out + 2 * out;
}

std::size_t decoder_convs(std::size_t scale) {
    return scale == 0 ? NetSpec::last_stage_convs : NetSpec::convs_per_stage;
}

std::size_t channels_at(const NetSpec& spec, std::size_t scale) {
    return spec.base_channels << scale;
}

std::size_t single_scale_params(const NetSpec& spec, std::size_t width) {
    const std::size_t units = unit_count(spec);
    return unit_params(1, width) + (units - 1) * unit_params(width, width) + width + 1;
}

std::size_t multi_scale_params(const NetSpec& spec) {
    std::size_t total = 0;
    for (std::size_t s = 0; s < spec.stages; ++s) {
        const std::size_t c = channels_at(spec, s);
        total += unit_params(s == 0 ? 1 : channels_at(spec, s - 1), c);
        total += (NetSpec::convs_per_stage - 1) * unit_params(c, c);
    }
    for (std::size_t k = 0; k + 1 < spec.stages; ++k) {
        const std::size_t s = spec.stages - 2 - k;
        const std::size_t c = channels_at(spec, s);
        total += unit_params(channels_at(spec, s + 1) + c, c);
        total += (decoder_convs(s) - 1) * unit_params(c, c);
    }
    return total + channels_at(spec, 0) + 1;
}

void fnv_mix(std::uint64_t& h, std::uint64_t v) {
    for (int i = 0; i < 8; ++i) {
        h ^= (v >> (8 * i)) & 0xffU;
        h *= 0x100000001b3ULL;
    }
}

void he_init(Tensor4& w, Rng& rng) {
    const Shape4& s = w.shape();
    const double scale = std::sqrt(2.0 / static_cast<double>(s.c * s.h * s.w));
    for (double& v : w.values()) v = scale * rng.normal();
}

}  // namespace

const char* to_string(LearningMode mode) noexcept {
    return mode == LearningMode::residual ? "residual" : "image";
}

LearningMode parse_learning_mode(const std::string& text) {
    if (text == "residual") return LearningMode::residual;
    if (text == "image") return LearningMode::image;
    fail(ErrorKind::config, "unknown learning mode '" + text + "' (expected residual|image)");
}

void NetSpec::validate() const {
    require(stages >= 1 && stages <= 8, ErrorKind::config, "stages must be in [1, 8]");
    require(base_channels >= 1, ErrorKind::config, "base_channels must be positive");
}

std::size_t NetSpec::size_multiple() const noexcept {
    return multi_scale ? std::size_t{1} << (stages - 1) : 1;
}

std::size_t unit_count(const NetSpec& spec) {
    std::size_t units = spec.stages * NetSpec::convs_per_stage;
    for (std::size_t s = 0; s + 1 < spec.stages; ++s) units += decoder_convs(s);
    return units;
}

std::size_t single_scale_width(const NetSpec& spec) {
    spec.validate();
    NetSpec multi = spec;
    multi.multi_scale = true;
    const auto target = static_cast<double>(multi_scale_params(multi));
    std::size_t best = 1;
    double best_gap = std::numeric_limits<double>::infinity();
    for (std::size_t w = 1; w <= 4096; ++w) {
        const double gap = std::abs(static_cast<double>(single_scale_params(spec, w)) - target);
        if (gap < best_gap) {
            best_gap = gap;
            best = w;
        }
        if (static_cast<double>(single_scale_params(spec, w)) > target) break;
    }
    return best;
}

std::size_t parameter_count(const NetSpec& spec) {
    spec.validate();
    if (spec.multi_scale) return multi_scale_params(spec);
    return single_scale_params(spec, single_scale_width(spec));
}

namespace {

struct Span {
    std::int64_t lo, hi;
};

Span widen(Span x, std::size_t convs) {
    const auto r = static_cast<std::int64_t>(convs * (NetSpec::kernel / 2));
    return {x.lo - r, x.hi + r};
}

std::int64_t floor_half(std::int64_t v) { return v >= 0 ? v / 2 : -((1 - v) / 2); }

// Input interval of encoder stage s feeding the interval x at the output of
// decoder stage s (encoder stage s for the deepest one).
Span stage_support(const NetSpec& spec, std::size_t s, Span x) {
    if (s + 1 == spec.stages) return widen(x, NetSpec::convs_per_stage);
    const Span before = widen(x, decoder_convs(s));
    const Span deep = stage_support(spec, s + 1, {floor_half(before.lo), floor_half(before.hi)});
    const Span merged{std::min(before.lo, 2 * deep.lo), std::max(before.hi, 2 * deep.hi + 1)};
    return widen(merged, NetSpec::convs_per_stage);
}

}  // namespace

std::size_t receptive_field(const NetSpec& spec) {
    spec.validate();
    if (!spec.multi_scale) return 1 + (NetSpec::kernel - 1) * unit_count(spec);
    std::int64_t best = 0;
    const auto phases = static_cast<std::int64_t>(spec.size_multiple());
    for (std::int64_t p = 0; p < phases; ++p) {
        const Span s = stage_support(spec, 0, {p, p});
        best = std::max(best, s.hi - s.lo + 1);
    }
    return static_cast<std::size_t>(best);
}

Tensor4 Network::Unit::forward(const Tensor4& x, Mode mode) {
    input = x;
    output = relu_forward(bn.forward(conv2d_forward(x, weight, {}), mode));
    return output;
}

Tensor4 Network::Unit::backward(const Tensor4& dout) {
    Tensor4 dz = bn.backward(relu_backward(output, dout));
    Conv2dGrads g = conv2d_backward(input, weight, dz, false);
    auto acc = dweight.values();
    const auto add = g.dweight.values();
    for (std::size_t i = 0; i < acc.size(); ++i) acc[i] += add[i];
    return std::move(g.dx);
}

Network::Unit Network::make_unit(std::size_t in, std::size_t out, Rng& rng) {
    Unit u;
    u.weight = Tensor4(out, in, NetSpec::kernel, NetSpec::kernel);
    u.dweight = Tensor4(u.weight.shape());
    he_init(u.weight, rng);
    u.bn = BatchNorm(out);
    return u;
}

Network::Network(const NetSpec& spec, std::uint64_t seed) : spec_(spec) {
    spec_.validate();
    Rng rng(seed);
    std::size_t head_in;
    if (spec_.multi_scale) {
        for (std::size_t s = 0; s < spec_.stages; ++s) {
            const std::size_t c = channels_at(spec_, s);
            std::vector<Unit> stage;
            stage.push_back(make_unit(s == 0 ? 1 : channels_at(spec_, s - 1), c, rng));
            for (std::size_t u = 1; u < NetSpec::convs_per_stage; ++u) {
                stage.push_back(make_unit(c, c, rng));
            }
            encoder_.push_back(std::move(stage));
        }
        for (std::size_t k = 0; k + 1 < spec_.stages; ++k) {
            const std::size_t s = spec_.stages - 2 - k;
            const std::size_t c = channels_at(spec_, s);
            std::vector<Unit> stage;
            up_channels_.push_back(channels_at(spec_, s + 1));
            stage.push_back(make_unit(channels_at(spec_, s + 1) + c, c, rng));
            for (std::size_t u = 1; u < decoder_convs(s); ++u) stage.push_back(make_unit(c, c, rng));
            decoder_.push_back(std::move(stage));
        }
        head_in = channels_at(spec_, 0);
    } else {
        const std::size_t w = single_scale_width(spec_);
        std::vector<Unit> flat;
        flat.push_back(make_unit(1, w, rng));
        for (std::size_t u = 1; u < unit_count(spec_); ++u) flat.push_back(make_unit(w, w, rng));
        encoder_.push_back(std::move(flat));
        head_in = w;
    }
    head_weight_ = Tensor4(1, head_in, 1, 1);
    he_init(head_weight_, rng);
    head_dweight_ = Tensor4(head_weight_.shape());
    head_bias_.assign(1, 0.0);
    head_dbias_.assign(1, 0.0);
}

template <class Fn>
void Network::for_each_unit(Fn&& fn) {
    for (auto& stage : encoder_) {
        for (Unit& u : stage) fn(u);
    }
    for (auto& stage : decoder_) {
        for (Unit& u : stage) fn(u);
    }
}

template <class Fn>
void Network::for_each_unit(Fn&& fn) const {
    for (const auto& stage : encoder_) {
        for (const Unit& u : stage) fn(u);
    }
    for (const auto& stage : decoder_) {
        for (const Unit& u : stage) fn(u);
    }
}

Tensor4 Network::forward(const Tensor4& x, Mode mode) {
    const Shape4& s = x.shape();
    require(s.c == 1, ErrorKind::shape_mismatch, "network input must have one channel");
    const std::size_t m = spec_.size_multiple();
    require(s.h % m == 0 && s.w % m == 0, ErrorKind::invalid_size,
            "input size must be a multiple of " + std::to_string(m));
    Tensor4 h = x;
    pools_.clear();
    pool_inputs_.clear();
    std::vector<Tensor4> skips;
    for (std::size_t st = 0; st < encoder_.size(); ++st) {
        if (st > 0) {
            pool_inputs_.push_back(h.shape());
            pools_.push_back(maxpool2x2_forward(h));
            h = pools_.back().out;
        }
        for (Unit& u : encoder_[st]) h = u.forward(h, mode);
        if (st + 1 < encoder_.size()) skips.push_back(h);
    }
    for (std::size_t k = 0; k < decoder_.size(); ++k) {
        const std::size_t scale = spec_.stages - 2 - k;
        h = concat_channels(avg_unpool2x2(h), skips[scale]);
        for (Unit& u : decoder_[k]) h = u.forward(h, mode);
    }
    head_input_ = std::move(h);
    return conv2d_forward(head_input_, head_weight_, head_bias_);
}

void Network::backward(const Tensor4& dout) {
    Conv2dGrads hg = conv2d_backward(head_input_, head_weight_, dout, true);
    for (std::size_t i = 0; i < head_dweight_.size(); ++i) {
        head_dweight_.data()[i] += hg.dweight.data()[i];
    }
    head_dbias_[0] += hg.dbias[0];
    Tensor4 dh = std::move(hg.dx);

    std::vector<Tensor4> dskips(encoder_.size());
    for (std::size_t k = decoder_.size(); k-- > 0;) {
        const std::size_t scale = spec_.stages - 2 - k;
        for (auto u = decoder_[k].rbegin(); u != decoder_[k].rend(); ++u) dh = u->backward(dh);
        Tensor4 dup;
        split_channels(dh, up_channels_[k], dup, dskips[scale]);
        dh = avg_pool2x2(dup);
    }
    for (std::size_t st = encoder_.size(); st-- > 0;) {
        if (st + 1 < encoder_.size()) {
            auto acc = dh.values();
            const auto add = dskips[st].values();
            for (std::size_t i = 0; i < acc.size(); ++i) acc[i] += add[i];
        }
        for (auto u = encoder_[st].rbegin(); u != encoder_[st].rend(); ++u) dh = u->backward(dh);
        if (st > 0) dh = maxpool2x2_backward(pool_inputs_[st - 1], pools_[st - 1].argmax, dh);
    }
}

void Network::zero_grad() {
    for_each_unit([](Unit& u) {
        u.dweight.fill(0.0);
        std::fill(u.bn.dgamma.begin(), u.bn.dgamma.end(), 0.0);
        std::fill(u.bn.dbeta.begin(), u.bn.dbeta.end(), 0.0);
    });
    head_dweight_.fill(0.0);
    head_dbias_[0] = 0.0;
}

std::vector<Param> Network::parameters() {
    std::vector<Param> params;
    for_each_unit([&](Unit& u) {
        params.push_back({u.weight.values(), u.dweight.values(), true});
        params.push_back({u.bn.gamma, u.bn.dgamma, false});
        params.push_back({u.bn.beta, u.bn.dbeta, false});
    });
    params.push_back({head_weight_.values(), head_dweight_.values(), true});
    params.push_back({head_bias_, head_dbias_, false});
    return params;
}

std::size_t Network::parameter_count() const {
    std::size_t total = head_weight_.size() + head_bias_.size();
    for_each_unit([&](const Unit& u) { total += u.weight.size() + 2 * u.bn.channels(); });
    return total;
}

std::size_t Network::state_size() const {
    std::size_t total = parameter_count();
    for_each_unit([&](const Unit& u) { total += 2 * u.bn.channels() + 1; });
    return total + 1;
}

std::vector<double> Network::state() const {
    std::vector<double> out;
    out.reserve(state_size());
    auto append = [&](std::span<const double> v) { out.insert(out.end(), v.begin(), v.end()); };
    for_each_unit([&](const Unit& u) {
        append(u.weight.values());
        append(u.bn.gamma);
        append(u.bn.beta);
    });
    append(head_weight_.values());
    append(head_bias_);
    for_each_unit([&](const Unit& u) {
        append(u.bn.running_mean);
        append(u.bn.running_var);
        out.push_back(u.bn.initialized ? 1.0 : 0.0);
    });
    out.push_back(target_scale_);
    return out;
}

void Network::load_state(std::span<const double> state) {
    require(state.size() == state_size(), ErrorKind::shape_mismatch,
            "checkpoint holds " + std::to_string(state.size()) + " values, network needs " +
                std::to_string(state_size()));
    std::size_t pos = 0;
    auto take = [&](std::span<double> dst) {
        std::copy(state.begin() + static_cast<std::ptrdiff_t>(pos),
                  state.begin() + static_cast<std::ptrdiff_t>(pos + dst.size()), dst.begin());
        pos += dst.size();
    };
    for_each_unit([&](Unit& u) {
        take(u.weight.values());
        take(u.bn.gamma);
        take(u.bn.beta);
    });
    take(head_weight_.values());
    take(head_bias_);
    for_each_unit([&](Unit& u) {
        take(u.bn.running_mean);
        take(u.bn.running_var);
        u.bn.initialized = state[pos++] != 0.0;
    });
    set_target_scale(state[pos]);
}

void Network::set_target_scale(double scale) {
    require(std::isfinite(scale) && scale > 0.0, ErrorKind::config,
            "target scale must be positive and finite");
    target_scale_ = scale;
}

std::uint64_t Network::kink_signature() const {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for_each_unit([&](const Unit& u) {
        std::uint64_t word = 0;
        std::size_t bits = 0;
        for (double v : u.output.values()) {
            word = (word << 1) | (v > 0.0 ? 1U : 0U);
            if (++bits == 64) {
                fnv_mix(h, word);
                word = 0;
                bits = 0;
            }
        }
        fnv_mix(h, word);
    });
    for (const MaxPoolResult& p : pools_) {
        for (std::uint32_t idx : p.argmax) fnv_mix(h, idx);
    }
    return h;
}

LossResult forward_backward(Network& net, const Tensor4& x, const Tensor4& y, double weight_decay,
                            Mode mode) {
    require(x.shape() == y.shape(), ErrorKind::shape_mismatch,
            "input and label batches differ in shape");
    net.zero_grad();
    Tensor4 f = net.forward(x, mode);
    const auto count = static_cast<double>(f.size());
    Tensor4 diff(f.shape());
    double sq = 0.0;
    for (std::size_t i = 0; i < f.size(); ++i) {
        const double d = f.data()[i] - y.data()[i];
        diff.data()[i] = d / count;
        sq += d * d;
    }
    LossResult r;
    r.data_term = 0.5 * sq / count;
    auto params = net.parameters();
    double wsq = 0.0;
    for (const Param& p : params) {
        if (!p.decayed) continue;
        for (double v : p.value) wsq += v * v;
    }
    r.decay_term = 0.5 * weight_decay * wsq;
    r.loss = r.data_term + r.decay_term;
    require(std::isfinite(r.loss), ErrorKind::diverged, "non-finite training loss");
    net.backward(diff);
    if (weight_decay != 0.0) {
        for (Param& p : params) {
            if (!p.decayed) continue;
            for (std::size_t i = 0; i < p.value.size(); ++i) p.grad[i] += weight_decay * p.value[i];
        }
    }
    return r;
}

Tensor4 to_tensor(const Image& img) {
    Tensor4 t(1, 1, img.size(), img.size());
    std::copy(img.values().begin(), img.values().end(), t.data());
    return t;
}

Image to_image(const Tensor4& t) {
    const Shape4& s = t.shape();
    require(s.n == 1 && s.c == 1 && s.h == s.w, ErrorKind::shape_mismatch,
            "only a single square one-channel tensor converts to an image");
    return Image(s.h, std::vector<double>(t.values().begin(), t.values().end()));
}

Image infer(Network& net, const Image& img) {
    const std::size_t m = net.spec().size_multiple();
    require(img.size() % m == 0, ErrorKind::invalid_size,
            "image size " + std::to_string(img.size()) + " is not a multiple of " +
                std::to_string(m) + "; pad before inference");
    Image out = to_image(net.forward(to_tensor(img), Mode::eval));
    const double inv = 1.0 / net.target_scale();
    for (double& v : out.values()) v *= inv;
    if (net.spec().mode == LearningMode::residual) return img - out;
    return out;
}

}  // namespace svct::nn
