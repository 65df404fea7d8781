#include <catch_amalgamated.hpp>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <set>

#include "svct/error.hpp"
#include "svct/io.hpp"
#include "svct/nn/checkpoint.hpp"
#include "svct/nn/gradcheck.hpp"
#include "svct/nn/network.hpp"
#include "svct/nn/trainer.hpp"
#include "svct/phantom.hpp"
#include "svct/random.hpp"

using namespace svct;
using namespace svct::nn;
using Catch::Approx;
namespace fs = std::filesystem;

namespace {

NetSpec make_spec(std::size_t stages, std::size_t base, bool multi,
                  LearningMode mode = LearningMode::residual) {
    NetSpec s;
    s.stages = stages;
    s.base_channels = base;
    s.multi_scale = multi;
    s.mode = mode;
    return s;
}

Tensor4 random_tensor(Shape4 s, std::uint64_t seed, double scale = 1.0) {
    Rng rng(seed);
    Tensor4 t(s);
    for (double& v : t.values()) v = scale * rng.normal();
    return t;
}

std::size_t enumerate_parameters(Network& net) {
    std::size_t total = 0;
    for (const Param& p : net.parameters()) total += p.value.size();
    return total;
}

// Width of the set of input samples one output sample depends on, found by
// walking the layer graph backwards along one axis.
struct Dependency {
    std::set<long> positions;
};

std::set<long> through_conv(const std::set<long>& s, std::size_t convs) {
    std::set<long> out = s;
    for (std::size_t k = 0; k < convs; ++k) {
        std::set<long> next;
        for (long p : out) {
            next.insert(p - 1);
            next.insert(p);
            next.insert(p + 1);
        }
        out = std::move(next);
    }
    return out;
}

std::set<long> through_pool(const std::set<long>& s) {
    std::set<long> out;
    for (long p : s) {
        out.insert(2 * p);
        out.insert(2 * p + 1);
    }
    return out;
}

std::set<long> through_unpool(const std::set<long>& s) {
    std::set<long> out;
    for (long p : s) out.insert(p >= 0 ? p / 2 : -((-p + 1) / 2));
    return out;
}

long span_of(const std::set<long>& s) { return *s.rbegin() - *s.begin() + 1; }

// Dependency set at the input of encoder stage s for positions at the
// output of decoder stage s (or of encoder stage S-1 when s = S-1).
std::set<long> multi_dependency(const NetSpec& spec, std::size_t s, const std::set<long>& at) {
    const std::size_t S = spec.stages;
    if (s + 1 == S) return through_conv(at, NetSpec::convs_per_stage);
    const std::size_t dec = s == 0 ? NetSpec::last_stage_convs : NetSpec::convs_per_stage;
    const std::set<long> before_dec = through_conv(at, dec);
    // Skip branch: encoder stage s output.
    std::set<long> merged = before_dec;
    // Deep branch: unpooled output of stage s + 1.
    const std::set<long> deep_out = through_unpool(before_dec);
    const std::set<long> deep_in = multi_dependency(spec, s + 1, deep_out);
    const std::set<long> pooled = through_pool(deep_in);
    merged.insert(pooled.begin(), pooled.end());
    return through_conv(merged, NetSpec::convs_per_stage);
}

long graph_receptive_field(const NetSpec& spec) {
    if (!spec.multi_scale) return span_of(through_conv({0}, unit_count(spec)));
    long best = 0;
    for (long p = 0; p < 16; ++p) best = std::max(best, span_of(multi_dependency(spec, 0, {p})));
    return best;
}

}  // namespace

TEST_CASE("spec validation", "[network]") {
    CHECK_NOTHROW(make_spec(3, 8, true).validate());
    CHECK_THROWS_AS(make_spec(0, 8, true).validate(), Error);
    CHECK_THROWS_AS(make_spec(3, 0, true).validate(), Error);
    CHECK(make_spec(3, 8, true).size_multiple() == 4);
    CHECK(parse_learning_mode("residual") == LearningMode::residual);
    CHECK(parse_learning_mode("image") == LearningMode::image);
    try {
        parse_learning_mode("both");
        FAIL("expected config error");
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::config);
    }
}

TEST_CASE("same-size contract", "[network]") {
    for (bool multi : {true, false}) {
        Network net(make_spec(3, 8, multi), 1);
        const Tensor4 x = random_tensor({1, 1, 64, 64}, 2);
        CHECK(net.forward(x, Mode::train).shape() == Shape4{1, 1, 64, 64});
        CHECK(net.forward(random_tensor({2, 1, 16, 24}, 3), Mode::train).shape() ==
              Shape4{2, 1, 16, 24});
    }
    Network net(make_spec(3, 4, true), 1);
    try {
        net.forward(Tensor4(1, 1, 30, 32), Mode::train);
        FAIL("expected invalid_size");
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::invalid_size);
    }
    CHECK_THROWS_AS(net.forward(Tensor4(1, 2, 32, 32), Mode::train), Error);
}

TEST_CASE("parameter counts", "[network]") {
    for (std::size_t stages : {1, 2, 3, 4}) {
        for (std::size_t base : {4, 8}) {
            for (bool multi : {true, false}) {
                const NetSpec spec = make_spec(stages, base, multi);
                Network net(spec, 3);
                INFO("stages " << stages << " base " << base << " multi " << multi);
                CHECK(enumerate_parameters(net) == parameter_count(spec));
                CHECK(net.parameter_count() == parameter_count(spec));
            }
            const double m = static_cast<double>(parameter_count(make_spec(stages, base, true)));
            const double s = static_cast<double>(parameter_count(make_spec(stages, base, false)));
            CHECK(std::abs(s - m) <= 0.1 * m);
        }
    }
    CHECK(parameter_count(make_spec(3, 8, true)) == 58865);
    CHECK(single_scale_width(make_spec(3, 8, false)) == 19);
    CHECK(unit_count(make_spec(3, 8, true)) == 18);
}

TEST_CASE("one stage multi-scale is the single-scale network", "[network]") {
    Network a(make_spec(1, 6, true), 9), b(make_spec(1, 6, false), 9);
    CHECK(a.parameter_count() == b.parameter_count());
    const Tensor4 x = random_tensor({2, 1, 8, 8}, 4);
    CHECK(a.forward(x, Mode::train) == b.forward(x, Mode::train));
}

TEST_CASE("receptive field", "[network]") {
    CHECK(span_of(through_conv({0}, 1)) == 3);
    CHECK(span_of(through_conv({0}, 2)) == 5);
    for (std::size_t stages : {1, 2, 3, 4}) {
        for (bool multi : {true, false}) {
            const NetSpec spec = make_spec(stages, 4, multi);
            INFO("stages " << stages << " multi " << multi);
            CHECK(static_cast<long>(receptive_field(spec)) == graph_receptive_field(spec));
        }
    }
    CHECK(receptive_field(make_spec(3, 8, true)) > receptive_field(make_spec(3, 8, false)));
    CHECK(receptive_field(make_spec(1, 8, true)) == receptive_field(make_spec(1, 8, false)));
}

TEST_CASE("finite-difference helper", "[gradcheck]") {
    double x = 0.7;
    const FiniteDifference fd = central_difference([&] { return x * x * x + std::sin(x); }, &x, 1e-3);
    CHECK(fd.resolved);
    CHECK(x == 0.7);
    CHECK(fd.derivative == Approx(3 * 0.49 + std::cos(0.7)).epsilon(1e-9));

    // |x| near its kink: the region predicate forces a smaller step.
    double y = 2e-4;
    const FiniteDifference k = central_difference([&] { return std::abs(y); }, &y, 1e-3,
                                                  [&] { return static_cast<std::uint64_t>(y > 0); });
    CHECK(k.resolved);
    CHECK(k.step < 2e-4);
    CHECK(k.derivative == Approx(1.0).epsilon(1e-9));

    CHECK(relative_error(1.0, 1.0) == 0.0);
    CHECK(relative_error(1e-9, 0.0) == Approx(1e-3));
}

TEST_CASE("network gradients match finite differences", "[gradcheck]") {
    for (bool multi : {true, false}) {
        Network net(make_spec(2, 4, multi), 11);
        const Tensor4 x = random_tensor({2, 1, 8, 8}, 12);
        const Tensor4 y = random_tensor({2, 1, 8, 8}, 13, 0.5);
        const GradCheckReport r = check_network_gradients(net, x, y, 1e-2);
        INFO((multi ? "multi" : "single") << ": worst " << r.max_relative_error << " over "
                                          << r.checked << ", refined " << r.refined);
        CHECK(r.checked == net.parameter_count());
        CHECK(r.unresolved == 0);
        CHECK(r.max_relative_error <= 1e-4);
    }
    Network deep(make_spec(3, 2, true), 11);
    const GradCheckReport r = check_network_gradients(deep, random_tensor({2, 1, 8, 8}, 12),
                                                      random_tensor({2, 1, 8, 8}, 13, 0.5), 1e-2);
    CHECK(r.unresolved == 0);
    CHECK(r.max_relative_error <= 1e-4);
}

TEST_CASE("loss terms", "[network]") {
    Network net(make_spec(2, 4, true), 5);
    const Tensor4 x = random_tensor({2, 1, 8, 8}, 6);
    const Tensor4 fx = net.forward(x, Mode::train);

    const LossResult exact = forward_backward(net, x, fx, 1e-2);
    CHECK(exact.data_term == 0.0);
    std::vector<double> g1;
    for (const Param& p : net.parameters()) {
        for (std::size_t k = 0; k < p.value.size(); ++k) {
            const double expect = p.decayed ? 1e-2 * p.value[k] : 0.0;
            CHECK(p.grad[k] == Approx(expect).margin(1e-12));
        }
    }

    const Tensor4 y = random_tensor(fx.shape(), 7);
    const LossResult l1 = forward_backward(net, x, y, 1e-3);
    for (const Param& p : net.parameters()) g1.insert(g1.end(), p.grad.begin(), p.grad.end());
    const LossResult l2 = forward_backward(net, x, y, 2e-3);
    CHECK(l2.decay_term == Approx(2.0 * l1.decay_term));
    CHECK(l2.data_term == l1.data_term);
    std::size_t k = 0;
    for (const Param& p : net.parameters()) {
        for (std::size_t i = 0; i < p.value.size(); ++i, ++k) {
            const double decay_part = p.decayed ? 1e-3 * p.value[i] : 0.0;
            CHECK(p.grad[i] - g1[k] == Approx(decay_part).margin(1e-12));
        }
    }

    double mse = 0.0;
    for (std::size_t i = 0; i < fx.size(); ++i) mse += std::pow(fx.values()[i] - y.values()[i], 2);
    CHECK(l1.data_term == Approx(0.5 * mse / static_cast<double>(fx.size())));

    Tensor4 bad = y;
    bad.values()[0] = NAN;
    try {
        forward_backward(net, x, bad, 0.0);
        FAIL("expected diverged");
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::diverged);
    }
}

TEST_CASE("inference modes", "[network]") {
    const Image img = rasterize(random_phantom(1), 32);
    {
        Network net(make_spec(2, 4, true, LearningMode::residual), 2);
        CHECK_THROWS_AS(infer(net, img), Error);  // eval before any training step
        net.forward(to_tensor(img), Mode::train);
        auto params = net.parameters();
        for (double& v : params[params.size() - 2].value) v = 0.0;
        for (double& v : params.back().value) v = 0.0;
        CHECK(infer(net, img) == img);
    }
    {
        Network net(make_spec(2, 4, true, LearningMode::image), 2);
        net.forward(to_tensor(img), Mode::train);
        CHECK(infer(net, img) == to_image(net.forward(to_tensor(img), Mode::eval)));
        CHECK_THROWS_AS(infer(net, Image(31)), Error);
    }
    CHECK(to_image(to_tensor(img)) == img);
}

TEST_CASE("learning-rate schedule", "[trainer]") {
    TrainConfig cfg;
    cfg.epochs = 30;
    cfg.lr_start = 1e-1;
    cfg.lr_end = 1e-3;
    CHECK(cfg.learning_rate(0) == 1e-1);
    CHECK(cfg.learning_rate(29) == 1e-3);
    for (std::size_t k = 0; k < 30; ++k) {
        CHECK(cfg.learning_rate(k) == Approx(1e-1 * std::pow(1e-2, k / 29.0)).epsilon(1e-12));
    }
    cfg.epochs = 1;
    CHECK(cfg.learning_rate(0) == 1e-1);

    const NetSpec spec = make_spec(3, 8, true);
    TrainConfig bad;
    bad.lr_end = 1.0;
    CHECK_THROWS_AS(bad.validate(spec), Error);
    bad = TrainConfig{};
    bad.patch = 30;
    CHECK_THROWS_AS(bad.validate(spec), Error);
}

TEST_CASE("training is deterministic", "[trainer]") {
    TrainingSet data;
    ValidationSet val;
    for (std::uint64_t s = 0; s < 3; ++s) {
        const Image truth = rasterize(random_phantom(s), 32);
        Image noisy = truth;
        Rng rng(s + 10);
        for (double& v : noisy.values()) v += 0.05 * rng.normal();
        data.inputs.push_back(noisy);
        data.labels.push_back(noisy - truth);
        if (s == 0) {
            val.inputs.push_back(noisy);
            val.references.push_back(truth);
        }
    }
    TrainConfig cfg;
    cfg.epochs = 3;
    cfg.patch = 16;
    cfg.batch = 2;
    cfg.lr_start = 0.05;
    cfg.lr_end = 0.01;
    cfg.seed = 4;
    auto run = [&] {
        Network net(make_spec(2, 4, true), 3);
        auto hist = train(net, data, val, cfg);
        return std::pair{hist, net.state()};
    };
    const auto [h1, s1] = run();
    const auto [h2, s2] = run();
    REQUIRE(h1.size() == 3);
    for (std::size_t k = 0; k < 3; ++k) {
        CHECK(h1[k].train_loss == h2[k].train_loss);
        CHECK(h1[k].val_psnr == h2[k].val_psnr);
        CHECK(h1[k].lr == cfg.learning_rate(k));
    }
    CHECK(s1 == s2);

    Network net(make_spec(2, 4, true), 3);
    cfg.lr_start = 1e6;
    cfg.lr_end = 1e6;
    try {
        train(net, data, val, cfg);
        FAIL("expected divergence");
    } catch (const DivergedError& e) {
        CHECK(e.index() < cfg.epochs);
    }
}

TEST_CASE("one-sample overfit", "[trainer]") {
    Network net(make_spec(2, 4, true, LearningMode::image), 21);
    const Image target = rasterize(random_phantom(3), 16);
    const Tensor4 x = to_tensor(target), y = to_tensor(target);
    double mse = INFINITY;
    std::size_t steps = 0;
    for (; steps < 2000 && mse >= 1e-4; ++steps) {
        const LossResult l = forward_backward(net, x, y, 0.0);
        mse = 2.0 * l.data_term;
        for (Param& p : net.parameters()) {
            for (std::size_t k = 0; k < p.value.size(); ++k) p.value[k] -= 0.3 * p.grad[k];
        }
    }
    INFO("steps " << steps << " mse " << mse);
    CHECK(mse < 1e-4);
}

TEST_CASE("state and checkpoints", "[checkpoint]") {
    const fs::path dir = fs::temp_directory_path() / "svct_test_ckpt";
    fs::remove_all(dir);
    Network net(make_spec(2, 4, false, LearningMode::image), 8);
    net.forward(random_tensor({2, 1, 8, 8}, 1), Mode::train);
    CHECK(net.state().size() == net.state_size());

    Network same(make_spec(2, 4, false, LearningMode::image), 8);
    Network other(make_spec(2, 4, false, LearningMode::image), 9);
    same.forward(random_tensor({2, 1, 8, 8}, 1), Mode::train);
    CHECK(same.state() == net.state());
    CHECK_FALSE(other.state() == net.state());

    const CheckpointInfo info = save_checkpoint(dir / "net.bin", net);
    CHECK(info.hash == io::hex64(io::fnv1a64(io::read_file(dir / "net.bin"))));
    CHECK(info.values == net.state_size());
    CheckpointInfo loaded_info;
    Network loaded = load_checkpoint(dir / "net.bin", &loaded_info);
    CHECK(loaded.spec() == net.spec());
    CHECK(loaded.state() == net.state());
    CHECK(loaded_info.hash == info.hash);
    const Image img = rasterize(random_phantom(2), 16);
    CHECK(infer(loaded, img) == infer(net, img));
    CHECK(save_checkpoint(dir / "again.bin", loaded).hash == info.hash);

    std::string blob = io::read_file(dir / "net.bin");
    blob[10] ^= 1;
    io::atomic_write(dir / "net.bin", blob);
    CHECK_THROWS_AS(load_checkpoint(dir / "net.bin"), Error);
    CHECK_THROWS_AS(load_checkpoint(dir / "missing.bin"), Error);

    Network wrong(make_spec(3, 4, false), 1);
    CHECK_THROWS_AS(wrong.load_state(net.state()), Error);
}
