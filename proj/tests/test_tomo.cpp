#include <catch_amalgamated.hpp>

#include <algorithm>
#include <cmath>
#include <limits>

#include "svct/error.hpp"
#include "svct/metrics.hpp"
#include "svct/parallel.hpp"
#include "svct/phantom.hpp"
#include "svct/random.hpp"
#include "svct/tomo.hpp"

using namespace svct;
using Catch::Approx;

namespace {

Image random_image(std::size_t n, std::uint64_t seed) {
    Rng rng(seed);
    Image img(n);
    for (double& v : img.values()) v = rng.uniform(-1.0, 1.0);
    return img;
}

Sinogram random_sinogram(const Sinogram& like, std::uint64_t seed) {
    Rng rng(seed);
    Sinogram s = like;
    for (double& v : s.data) v = rng.uniform(-1.0, 1.0);
    return s;
}

double max_abs(std::span<const double> v) {
    double m = 0.0;
    for (double x : v) m = std::max(m, std::abs(x));
    return m;
}

// Band-limited Ram-Lak taps for unit spacing: h(0) = 1/4, h(odd k) = -1/(pi k)^2, 0 otherwise.
double ramlak_unit(long k) {
    if (k == 0) return 0.25;
    if (k % 2 == 0) return 0.0;
    return -1.0 / (M_PI * M_PI * static_cast<double>(k * k));
}

}  // namespace

TEST_CASE("standard geometry", "[tomo]") {
    const Geometry g = Geometry::standard(64, 12);
    CHECK(g.detectors == 129);
    CHECK(g.detector_spacing == Approx(std::sqrt(2.0) / 64));
    CHECK(g.span() >= 2.0 * std::sqrt(2.0) - 1e-12);
    const auto a = g.angles();
    REQUIRE(a.size() == 12);
    CHECK(a[0] == 0.0);
    CHECK(a[3] == Approx(M_PI / 4));
    CHECK(std::is_sorted(a.begin(), a.end()));
    CHECK(a.back() < M_PI);

    Geometry even = g;
    even.detectors = 128;
    try {
        even.validate();
        FAIL("expected invalid_size");
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::invalid_size);
    }
    Geometry narrow = g;
    narrow.detector_spacing *= 0.5;
    try {
        project(Image(64), narrow);
        FAIL("expected truncation");
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::truncation);
    }
}

TEST_CASE("disk projections match the chord length", "[tomo]") {
    const std::size_t n = 256;
    const double r = 0.5;
    const Sinogram s = project(rasterize(centered_disk(r), n), Geometry::standard(n, 36));
    double worst = 0.0;
    for (std::size_t v = 0; v < s.views; ++v) {
        for (std::size_t d = 0; d < s.detectors; ++d) {
            const double t = s.bin_position(d);
            if (std::abs(t) >= r) continue;
            worst = std::max(worst, std::abs(s.at(v, d) - 2.0 * std::sqrt(r * r - t * t)));
        }
    }
    CHECK(worst <= 0.02 * 2.0 * r);

    // Rows are view independent up to the pixelized disk edge.
    double spread = 0.0;
    for (std::size_t v = 1; v < s.views; ++v) {
        for (std::size_t d = 0; d < s.detectors; ++d) {
            spread = std::max(spread, std::abs(s.at(v, d) - s.at(0, d)));
        }
    }
    CHECK(spread <= 2.0 * (2.0 / static_cast<double>(n)));
}

TEST_CASE("projector basics", "[tomo]") {
    const Geometry g = Geometry::standard(64, 16);
    CHECK(max_abs(project(Image(64), g).data) == 0.0);

    const Image dot = point_targets({{0.0, 0.0}}, 1.0, 65);
    const Sinogram s = project(dot, Geometry::standard(65, 16));
    for (std::size_t v = 0; v < s.views; ++v) {
        const auto row = s.row(v);
        const auto peak = static_cast<std::size_t>(std::max_element(row.begin(), row.end()) - row.begin());
        CHECK(peak == s.detectors / 2);
    }
}

TEST_CASE("projection of a point-symmetric phantom is even in t", "[tomo]") {
    EllipsePhantom p;
    p.ellipses.push_back({0.0, 0.0, 0.6, 0.3, 0.4, 1.0});
    p.ellipses.push_back({0.3, 0.2, 0.1, 0.15, 0.0, 0.5});
    p.ellipses.push_back({-0.3, -0.2, 0.1, 0.15, 0.0, 0.5});
    const std::size_t n = 128;
    const Image img = rasterize(p, n);
    // Exact point symmetry on the pixel grid.
    for (std::size_t r = 0; r < n; ++r) {
        for (std::size_t c = 0; c < n; ++c) REQUIRE(img(r, c) == img(n - 1 - r, n - 1 - c));
    }
    const Sinogram s = project(img, Geometry::standard(n, 24));
    const double peak = max_abs(s.data);
    for (std::size_t v = 0; v < s.views; ++v) {
        for (std::size_t d = 0; d < s.detectors; ++d) {
            CHECK(std::abs(s.at(v, d) - s.at(v, s.detectors - 1 - d)) <= 1e-3 * peak);
        }
    }
}

TEST_CASE("rotating the image by 90 degrees shifts the views", "[tomo]") {
    const std::size_t n = 32;
    const Image img = random_image(n, 3);
    Image rot(n);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < n; ++j) rot(i, j) = img(j, n - 1 - i);
    }
    const Geometry g = Geometry::standard(n, 4);
    const Sinogram a = project(img, g), b = project(rot, g);
    // Counter-clockwise rotation: P'(theta, t) = P(theta - pi/2, t), P(theta - pi, t) = P(theta, -t).
    for (std::size_t k = 0; k < 4; ++k) {
        const std::size_t src = (k + 2) % 4;
        const bool flip = k < 2;
        for (std::size_t d = 0; d < g.detectors; ++d) {
            CHECK(b.at(k, d) == Approx(a.at(src, flip ? g.detectors - 1 - d : d)).margin(1e-12));
        }
    }
}

TEST_CASE("ramp filter", "[tomo]") {
    const std::size_t n = 64;
    const Geometry g = Geometry::standard(n, 1);
    Sinogram s(std::vector<double>{0.0}, g.detectors, g.detector_spacing);
    const std::size_t c = g.detectors / 2;

    SECTION("padding") {
        CHECK(ramp_padded_length(129) == 512);
        CHECK(ramp_padded_length(128) == 256);
        CHECK(ramp_padded_length(3) == 8);
    }

    SECTION("impulse response is the band-limited Ram-Lak kernel") {
        s.at(0, c) = 1.0;
        const Sinogram f = ramp_filter(s);
        const double tau = g.detector_spacing;
        const double h0 = ramlak_unit(0) / tau;
        for (std::size_t d = 0; d < g.detectors; ++d) {
            const long k = static_cast<long>(d) - static_cast<long>(c);
            const double expect = ramlak_unit(k) / tau;
            CHECK(std::abs(f.at(0, d) - expect) <= 1e-3 * std::abs(h0));
            CHECK(ramlak_kernel(k, tau) == Approx(expect).margin(1e-12));
        }
        CHECK(f.at(0, c) / std::abs(f.at(0, c + 1)) == Approx(0.25 * M_PI * M_PI).epsilon(1e-3));
    }

    SECTION("DC is removed") {
        const auto resp = ramp_frequency_response(ramp_padded_length(g.detectors), g.detector_spacing);
        CHECK(resp[0] == 0.0);
        for (double w : resp) CHECK(w >= 0.0);
        CHECK(resp[1] > 0.0);
    }

    SECTION("constant row equals the direct kernel convolution") {
        for (double& v : s.data) v = 2.0;
        const Sinogram f = ramp_filter(s);
        for (std::size_t d = 0; d < g.detectors; ++d) {
            double expect = 0.0;
            for (std::size_t j = 0; j < g.detectors; ++j) {
                expect += 2.0 * ramlak_kernel(static_cast<long>(d) - static_cast<long>(j),
                                              g.detector_spacing);
            }
            CHECK(f.at(0, d) == Approx(expect).margin(1e-3 * 2.0 * ramlak_kernel(0, g.detector_spacing)));
        }
    }
}

TEST_CASE("linear operators", "[tomo]") {
    const std::size_t n = 48;
    const Geometry g = Geometry::standard(n, 12);
    const Image x = random_image(n, 1), y = random_image(n, 2);
    const double a = 1.7, b = -0.6;
    auto rel = [](std::span<const double> lhs, std::span<const double> rhs) {
        double num = 0.0, den = 0.0;
        for (std::size_t k = 0; k < lhs.size(); ++k) {
            num = std::max(num, std::abs(lhs[k] - rhs[k]));
            den = std::max(den, std::abs(rhs[k]));
        }
        return num / den;
    };
    const Image mix = a * x + b * y;

    const Sinogram px = project(x, g), py = project(y, g), pm = project(mix, g);
    Sinogram combo = px;
    for (std::size_t k = 0; k < combo.data.size(); ++k) combo.data[k] = a * px.data[k] + b * py.data[k];
    CHECK(rel(pm.data, combo.data) < 1e-5);

    const Sinogram rx = ramp_filter(px), ry = ramp_filter(py), rm = ramp_filter(pm);
    for (std::size_t k = 0; k < combo.data.size(); ++k) combo.data[k] = a * rx.data[k] + b * ry.data[k];
    CHECK(rel(rm.data, combo.data) < 1e-5);

    const Image fx = fbp(px, n), fy = fbp(py, n), fm = fbp(pm, n);
    CHECK(rel(fm.values(), (a * fx + b * fy).values()) < 1e-5);

    CHECK(rel(residual(mix, y).values(), (mix - y).values()) == 0.0);
    CHECK(max_abs(fbp(project(Image(n), g), n).values()) == 0.0);
}

TEST_CASE("dense-view FBP converges", "[tomo]") {
    const std::size_t n = 128;
    const Image truth = rasterize(random_phantom(5), n);
    const Sinogram s = project(truth, Geometry::standard(n, 720));
    double peak = 0.0;
    for (double v : truth.values()) peak = std::max(peak, v);
    CHECK(psnr_inscribed(fbp(s, n), truth, peak) >= 30.0);
    CHECK(psnr_inscribed(fbp(subsample_views(s, 24), n), truth, peak) <
          psnr_inscribed(fbp(subsample_views(s, 72), n), truth, peak));
}

TEST_CASE("thread count does not change results", "[tomo]") {
    const Image img = random_image(40, 9);
    const Geometry g = Geometry::standard(40, 10);
    set_worker_threads(1);
    const Sinogram a = project(img, g);
    const Image fa = fbp(a, 40);
    set_worker_threads(3);
    const Sinogram b = project(img, g);
    const Image fb = fbp(b, 40);
    set_worker_threads(1);
    CHECK(a == b);
    CHECK(fa == fb);
}

TEST_CASE("subsample views", "[tomo]") {
    const Sinogram s = project(random_image(32, 4), Geometry::standard(32, 96));
    const Sinogram sub = subsample_views(s, 24);
    REQUIRE(sub.views == 24);
    for (std::size_t k = 0; k < 24; ++k) {
        CHECK(sub.angles[k] == s.angles[4 * k]);
        for (std::size_t d = 0; d < s.detectors; ++d) CHECK(sub.at(k, d) == s.at(4 * k, d));
    }
    CHECK(subsample_views(s, 96) == s);
    const Sinogram one = subsample_views(s, 1);
    CHECK(one.views == 1);
    CHECK(one.angles[0] == 0.0);
    try {
        subsample_views(s, 7);
        FAIL("expected invalid_stride");
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::invalid_stride);
    }
}

TEST_CASE("residual images", "[tomo]") {
    const std::size_t n = 64;
    const Image truth = rasterize(random_phantom(11), n);
    const Sinogram full = project(truth, Geometry::standard(n, 1152));
    const Image ref = fbp(full, n);
    CHECK(max_abs(residual(ref, ref).values()) == 0.0);
    double last = INFINITY;
    for (std::size_t v : {24, 32, 48, 96}) {
        const Image x = fbp(subsample_views(full, v), n);
        const Image y = residual(x, ref);
        const double scale = max_abs(x.values()) + max_abs(ref.values());
        CHECK(max_abs((ref + y - x).values()) <= 4.0 * std::numeric_limits<double>::epsilon() * scale);
        const double e = l2_norm(y);
        CHECK(e < last);
        last = e;
    }
    CHECK_THROWS_AS(residual(Image(16), Image(32)), Error);
}

TEST_CASE("sinogram invariants", "[tomo]") {
    Sinogram s(std::vector<double>{0.0, 1.0}, 5, 0.5);
    CHECK(s.data.size() == 10);
    CHECK(s.bin_position(2) == 0.0);
    CHECK(s.bin_position(0) == -1.0);
    s.angles = {1.0, 0.5};
    CHECK_THROWS_AS(s.validate(), Error);
    s.angles = {0.0, 1.0};
    s.data[3] = NAN;
    CHECK_THROWS_AS(s.validate(), Error);
    const Sinogram like = random_sinogram(Sinogram(std::vector<double>{0.0}, 3, 1.0), 1);
    CHECK(like.data.size() == 3);
}
