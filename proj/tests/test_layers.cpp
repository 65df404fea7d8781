#include <catch_amalgamated.hpp>

#include <algorithm>
#include <cmath>
#include <functional>
#include <tuple>

#include "svct/error.hpp"
#include "svct/nn/layers.hpp"
#include "svct/random.hpp"

using namespace svct;
using namespace svct::nn;
using Catch::Approx;

namespace {

Tensor4 random_tensor(Shape4 s, Rng& rng, double scale = 1.0) {
    Tensor4 t(s);
    for (double& v : t.values()) v = scale * rng.normal();
    return t;
}

double weighted_sum(const Tensor4& out, const Tensor4& w) {
    double s = 0.0;
    for (std::size_t k = 0; k < out.size(); ++k) s += out.values()[k] * w.values()[k];
    return s;
}

double rel(double a, double b) { return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-6}); }

// Max relative error between analytic[k] and central differences of loss() w.r.t. values[k].
double check_fd(std::span<double> values, std::span<const double> analytic,
                const std::function<double()>& loss, double h = 1e-5) {
    double worst = 0.0;
    for (std::size_t k = 0; k < values.size(); ++k) {
        const double keep = values[k];
        values[k] = keep + h;
        const double up = loss();
        values[k] = keep - h;
        const double down = loss();
        values[k] = keep;
        worst = std::max(worst, rel((up - down) / (2 * h), analytic[k]));
    }
    return worst;
}

}  // namespace

TEST_CASE("conv2d arithmetic", "[layers]") {
    SECTION("identity kernel") {
        Rng rng(1);
        const Tensor4 x = random_tensor({2, 1, 5, 6}, rng);
        Tensor4 w(1, 1, 3, 3);
        w(0, 0, 1, 1) = 1.0;
        CHECK(conv2d_forward(x, w, {}) == x);
    }
    SECTION("ones kernel on ones") {
        const Tensor4 x(1, 1, 5, 5, 1.0);
        const Tensor4 w(1, 1, 3, 3, 1.0);
        const Tensor4 y = conv2d_forward(x, w, {});
        CHECK(y(0, 0, 2, 2) == 9.0);
        CHECK(y(0, 0, 0, 0) == 4.0);
        CHECK(y(0, 0, 0, 2) == 6.0);
    }
    SECTION("1x1 kernel with bias mixes channels") {
        Tensor4 x(1, 2, 3, 3);
        x.fill(1.0);
        for (std::size_t k = 0; k < 9; ++k) x.plane(0, 1)[k] = 2.0;
        Tensor4 w(1, 2, 1, 1);
        w(0, 0, 0, 0) = 3.0;
        w(0, 1, 0, 0) = -1.0;
        const std::vector<double> b{0.5};
        CHECK(conv2d_forward(x, w, b)(0, 0, 1, 2) == Approx(1.5));
    }
    SECTION("channel mismatch") {
        try {
            conv2d_forward(Tensor4(1, 2, 4, 4), Tensor4(1, 3, 3, 3), {});
            FAIL("expected shape_mismatch");
        } catch (const Error& e) {
            CHECK(e.kind() == ErrorKind::shape_mismatch);
        }
    }
}

TEST_CASE("conv2d matches direct loops at network sizes", "[layers]") {
    Rng rng(41);
    for (const auto& [c_in, c_out, n] : {std::tuple{1, 8, 64}, std::tuple{8, 8, 64}, std::tuple{19, 19, 32},
                                         std::tuple{27, 8, 16}}) {
        const Tensor4 x = random_tensor({2, std::size_t(c_in), std::size_t(n), std::size_t(n)}, rng);
        const Tensor4 w = random_tensor({std::size_t(c_out), std::size_t(c_in), 3, 3}, rng);
        const Tensor4 dy = random_tensor({2, std::size_t(c_out), std::size_t(n), std::size_t(n)}, rng);
        Tensor4 y(2, c_out, n, n), dx(x.shape()), dw(w.shape());
        for (std::size_t b = 0; b < 2; ++b) {
            for (std::size_t o = 0; o < std::size_t(c_out); ++o) {
                for (long r = 0; r < n; ++r) {
                    for (long c = 0; c < n; ++c) {
                        for (std::size_t i = 0; i < std::size_t(c_in); ++i) {
                            for (long u = -1; u <= 1; ++u) {
                                for (long v = -1; v <= 1; ++v) {
                                    if (r + u < 0 || r + u >= n || c + v < 0 || c + v >= n) continue;
                                    const double xv = x(b, i, r + u, c + v);
                                    const double wv = w(o, i, u + 1, v + 1);
                                    y(b, o, r, c) += wv * xv;
                                    dx(b, i, r + u, c + v) += wv * dy(b, o, r, c);
                                    dw(o, i, u + 1, v + 1) += xv * dy(b, o, r, c);
                                }
                            }
                        }
                    }
                }
            }
        }
        const Tensor4 got = conv2d_forward(x, w, {});
        const Conv2dGrads g = conv2d_backward(x, w, dy, false);
        double worst = 0.0;
        for (std::size_t k = 0; k < y.size(); ++k) worst = std::max(worst, std::abs(got.values()[k] - y.values()[k]));
        for (std::size_t k = 0; k < dx.size(); ++k) worst = std::max(worst, std::abs(g.dx.values()[k] - dx.values()[k]));
        for (std::size_t k = 0; k < dw.size(); ++k) {
            worst = std::max(worst, std::abs(g.dweight.values()[k] - dw.values()[k]) / (1.0 + std::abs(dw.values()[k])));
        }
        INFO(c_in << " -> " << c_out << " at " << n);
        CHECK(worst <= 1e-9);
    }
}

TEST_CASE("conv2d gradients", "[layers]") {
    Rng rng(2);
    for (std::size_t k : {1, 3}) {
        Tensor4 x = random_tensor({2, 3, 5, 4}, rng);
        Tensor4 w = random_tensor({4, 3, k, k}, rng);
        std::vector<double> b{0.1, -0.2, 0.3, 0.0};
        const Tensor4 dout = random_tensor({2, 4, 5, 4}, rng);
        const Conv2dGrads g = conv2d_backward(x, w, dout, true);
        auto loss = [&] { return weighted_sum(conv2d_forward(x, w, b), dout); };
        CHECK(check_fd(x.values(), g.dx.values(), loss) <= 1e-6);
        CHECK(check_fd(w.values(), g.dweight.values(), loss) <= 1e-6);
        CHECK(check_fd(b, g.dbias, loss) <= 1e-6);
    }
}

TEST_CASE("batch norm", "[layers]") {
    Rng rng(3);
    const Tensor4 x = random_tensor({2, 3, 4, 4}, rng, 2.0);

    SECTION("train mode standardizes each channel") {
        BatchNorm bn(3);
        const Tensor4 y = bn.forward(x, Mode::train);
        for (std::size_t c = 0; c < 3; ++c) {
            double mean = 0.0, sq = 0.0;
            for (std::size_t n = 0; n < 2; ++n) {
                for (std::size_t k = 0; k < 16; ++k) {
                    mean += y.plane(n, c)[k];
                    sq += y.plane(n, c)[k] * y.plane(n, c)[k];
                }
            }
            mean /= 32.0;
            CHECK(std::abs(mean) <= 1e-5);
            CHECK(sq / 32.0 - mean * mean == Approx(1.0).epsilon(1e-3));
        }
    }

    SECTION("affine parameters") {
        BatchNorm plain(3), affine(3);
        std::fill(affine.gamma.begin(), affine.gamma.end(), 2.0);
        std::fill(affine.beta.begin(), affine.beta.end(), 3.0);
        const Tensor4 a = plain.forward(x, Mode::train);
        const Tensor4 b = affine.forward(x, Mode::train);
        for (std::size_t k = 0; k < a.size(); ++k) {
            CHECK(b.values()[k] == Approx(2.0 * a.values()[k] + 3.0).margin(1e-14));
        }
    }

    SECTION("running statistics") {
        BatchNorm bn(3);
        try {
            bn.forward(x, Mode::eval);
            FAIL("expected uninitialized_stats");
        } catch (const Error& e) {
            CHECK(e.kind() == ErrorKind::uninitialized_stats);
        }
        bn.forward(x, Mode::train);
        double mean0 = 0.0;
        for (std::size_t n = 0; n < 2; ++n) {
            for (std::size_t k = 0; k < 16; ++k) mean0 += x.plane(n, 0)[k];
        }
        mean0 /= 32.0;
        CHECK(bn.running_mean[0] == Approx(0.1 * mean0));
        const Tensor4 e1 = bn.forward(x, Mode::eval);
        const Tensor4 e2 = bn.forward(x, Mode::eval);
        CHECK(e1 == e2);
    }

    SECTION("train-mode gradients") {
        BatchNorm bn(3);
        Rng r2(4);
        for (std::size_t c = 0; c < 3; ++c) {
            bn.gamma[c] = 1.0 + 0.3 * r2.normal();
            bn.beta[c] = 0.2 * r2.normal();
        }
        Tensor4 xin = x;
        const Tensor4 dout = random_tensor(x.shape(), r2);
        bn.forward(xin, Mode::train);
        std::fill(bn.dgamma.begin(), bn.dgamma.end(), 0.0);
        std::fill(bn.dbeta.begin(), bn.dbeta.end(), 0.0);
        const Tensor4 dx = bn.backward(dout);
        const std::vector<double> dgamma = bn.dgamma, dbeta = bn.dbeta;
        auto loss = [&] {
            BatchNorm probe(3);
            probe.gamma = bn.gamma;
            probe.beta = bn.beta;
            return weighted_sum(probe.forward(xin, Mode::train), dout);
        };
        CHECK(check_fd(xin.values(), dx.values(), loss) <= 1e-4);
        CHECK(check_fd(bn.gamma, dgamma, loss) <= 1e-4);
        CHECK(check_fd(bn.beta, dbeta, loss) <= 1e-4);
    }

    SECTION("eval-mode gradients") {
        BatchNorm bn(3);
        bn.forward(x, Mode::train);
        Tensor4 xin = x;
        Rng r2(5);
        const Tensor4 dout = random_tensor(x.shape(), r2);
        bn.forward(xin, Mode::eval);
        const Tensor4 dx = bn.backward(dout);
        auto loss = [&] {
            BatchNorm probe = bn;
            return weighted_sum(probe.forward(xin, Mode::eval), dout);
        };
        CHECK(check_fd(xin.values(), dx.values(), loss) <= 1e-6);
    }
}

TEST_CASE("relu", "[layers]") {
    Tensor4 x(1, 1, 1, 4);
    x.values()[0] = -1.0;
    x.values()[1] = 0.5;
    x.values()[2] = 2.0;
    x.values()[3] = -0.1;
    const Tensor4 y = relu_forward(x);
    CHECK(y.values()[0] == 0.0);
    CHECK(y.values()[2] == 2.0);
    const Tensor4 d = relu_backward(y, Tensor4(1, 1, 1, 4, 1.0));
    CHECK(std::vector<double>(d.values().begin(), d.values().end()) == std::vector<double>{0, 1, 1, 0});

    Rng rng(6);
    Tensor4 xr = random_tensor({2, 2, 3, 3}, rng);
    for (double& v : xr.values()) v += v > 0 ? 0.1 : -0.1;
    const Tensor4 dout = random_tensor(xr.shape(), rng);
    const Tensor4 dx = relu_backward(relu_forward(xr), dout);
    CHECK(check_fd(xr.values(), dx.values(), [&] { return weighted_sum(relu_forward(xr), dout); }) <= 1e-8);
}

TEST_CASE("max pooling", "[layers]") {
    Tensor4 x(1, 1, 2, 2);
    x(0, 0, 0, 0) = 1;
    x(0, 0, 0, 1) = 2;
    x(0, 0, 1, 0) = 3;
    x(0, 0, 1, 1) = 4;
    const MaxPoolResult p = maxpool2x2_forward(x);
    REQUIRE(p.out.size() == 1);
    CHECK(p.out.values()[0] == 4.0);
    const Tensor4 d = maxpool2x2_backward(x.shape(), p.argmax, Tensor4(1, 1, 1, 1, 5.0));
    CHECK(std::vector<double>(d.values().begin(), d.values().end()) == std::vector<double>{0, 0, 0, 5});

    CHECK_THROWS_AS(maxpool2x2_forward(Tensor4(1, 1, 3, 4)), Error);

    Rng rng(7);
    Tensor4 xr(2, 3, 6, 4);
    // Distinct, well separated values keep the argmax stable under the probe step.
    std::vector<double> vals(xr.size());
    for (std::size_t k = 0; k < vals.size(); ++k) vals[k] = 0.01 * static_cast<double>(k);
    for (std::size_t k = vals.size(); k > 1; --k) std::swap(vals[k - 1], vals[rng.below(k)]);
    std::copy(vals.begin(), vals.end(), xr.values().begin());
    const MaxPoolResult pr = maxpool2x2_forward(xr);
    const Tensor4 dout = random_tensor(pr.out.shape(), rng);
    const Tensor4 dx = maxpool2x2_backward(xr.shape(), pr.argmax, dout);
    CHECK(check_fd(xr.values(), dx.values(),
                   [&] { return weighted_sum(maxpool2x2_forward(xr).out, dout); }) <= 1e-8);
}

TEST_CASE("average pool and unpool", "[layers]") {
    const Tensor4 four(1, 1, 1, 1, 4.0);
    const Tensor4 up = avg_unpool2x2(four);
    CHECK(up.shape() == Shape4{1, 1, 2, 2});
    for (double v : up.values()) CHECK(v == 1.0);

    Tensor4 blk(1, 1, 2, 2);
    blk.values()[0] = 1;
    blk.values()[1] = 2;
    blk.values()[2] = 3;
    blk.values()[3] = 6;
    CHECK(avg_pool2x2(blk).values()[0] == 3.0);

    // <avg_pool(x), y> = <x, avg_unpool(y)> exactly for dyadic values.
    Rng rng(8);
    Tensor4 x(2, 3, 8, 6), y(2, 3, 4, 3);
    for (double& v : x.values()) v = static_cast<double>(static_cast<int>(rng.below(64)) - 32) / 8.0;
    for (double& v : y.values()) v = static_cast<double>(static_cast<int>(rng.below(64)) - 32) / 8.0;
    CHECK(weighted_sum(avg_pool2x2(x), y) == weighted_sum(x, avg_unpool2x2(y)));

    Tensor4 yr = random_tensor({1, 2, 3, 3}, rng);
    const Tensor4 dout = random_tensor({1, 2, 6, 6}, rng);
    CHECK(check_fd(yr.values(), avg_pool2x2(dout).values(),
                   [&] { return weighted_sum(avg_unpool2x2(yr), dout); }) <= 1e-8);
}

TEST_CASE("channel concatenation", "[layers]") {
    Rng rng(9);
    const Tensor4 a = random_tensor({1, 2, 3, 4}, rng), b = random_tensor({1, 3, 3, 4}, rng);
    const Tensor4 c = concat_channels(a, b);
    CHECK(c.shape() == Shape4{1, 5, 3, 4});
    CHECK(c(0, 1, 2, 3) == a(0, 1, 2, 3));
    CHECK(c(0, 4, 0, 1) == b(0, 2, 0, 1));
    Tensor4 da, db;
    split_channels(c, 2, da, db);
    CHECK(da == a);
    CHECK(db == b);
    CHECK_THROWS_AS(concat_channels(a, Tensor4(1, 1, 2, 4)), Error);
}
