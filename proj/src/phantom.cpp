#include "svct/phantom.hpp"

#include <algorithm>
#include <cmath>
#include <string>
#include <tuple>

#include "svct/error.hpp"
#include "svct/random.hpp"

namespace svct {

bool Ellipse::contains(double x, double y) const noexcept {
    const double dx = x - center_x;
    const double dy = y - center_y;
    const double c = std::cos(rotation);
    const double s = std::sin(rotation);
    const double u = (dx * c + dy * s) / semi_a;
    const double v = (-dx * s + dy * c) / semi_b;
    return u * u + v * v <= 1.0;
}

Image rasterize(const EllipsePhantom& phantom, std::size_t n) {
    require(n >= min_raster_size, ErrorKind::invalid_size,
            "raster size must be at least 16, got " + std::to_string(n));
    Image img(n);
    for (const Ellipse& e : phantom.ellipses) {
        require(e.semi_a > 0.0 && e.semi_b > 0.0, ErrorKind::out_of_domain,
                "ellipse semi-axes must be positive");
        for (std::size_t r = 0; r < n; ++r) {
            const double y = img.pixel_center_y(r);
            for (std::size_t c = 0; c < n; ++c) {
                if (e.contains(img.pixel_center_x(c), y)) img(r, c) += e.value;
            }
        }
    }
    return img;
}

Image point_targets(const std::vector<std::pair<double, double>>& positions, double amplitude,
                    std::size_t n) {
    require(n >= min_raster_size, ErrorKind::invalid_size, "raster size must be at least 16");
    Image img(n);
    const auto last = static_cast<double>(n - 1);
    for (const auto& [x, y] : positions) {
        require(x >= -1.0 && x <= 1.0 && y >= -1.0 && y <= 1.0, ErrorKind::out_of_domain,
                "point target outside [-1,1]^2");
        const double c = std::clamp(std::round(img.col_coord(x)), 0.0, last);
        const double r = std::clamp(std::round(img.row_coord(y)), 0.0, last);
        img(static_cast<std::size_t>(r), static_cast<std::size_t>(c)) += amplitude;
    }
    return img;
}

EllipsePhantom random_phantom(std::uint64_t seed) {
    Rng rng(seed);
    EllipsePhantom p;

    // Body outline.
    Ellipse body;
    body.center_x = rng.uniform(-0.05, 0.05);
    body.center_y = rng.uniform(-0.05, 0.05);
    body.semi_a = rng.uniform(0.62, 0.82);
    body.semi_b = rng.uniform(0.50, 0.70);
    body.rotation = rng.uniform(-0.3, 0.3);
    body.value = rng.uniform(0.8, 1.0);
    p.ellipses.push_back(body);

    // Inclusions are placed in the body's unit-circle frame so they stay inside.
    auto inside_body = [&](double rad) {
        const double r = rad * std::sqrt(rng.uniform());
        const double phi = rng.uniform(0.0, 2.0 * M_PI);
        const double u = r * std::cos(phi) * body.semi_a;
        const double v = r * std::sin(phi) * body.semi_b;
        const double c = std::cos(body.rotation);
        const double s = std::sin(body.rotation);
        return std::pair{body.center_x + u * c - v * s, body.center_y + u * s + v * c};
    };

    const auto organs = 2 + rng.below(3);
    for (std::uint64_t k = 0; k < organs; ++k) {
        Ellipse e;
        std::tie(e.center_x, e.center_y) = inside_body(0.55);
        e.semi_a = rng.uniform(0.06, 0.20);
        e.semi_b = rng.uniform(0.06, 0.20);
        e.rotation = rng.uniform(0.0, M_PI);
        e.value = rng.uniform(-0.35, 0.35);
        p.ellipses.push_back(e);
    }
    const auto inserts = 1 + rng.below(3);
    for (std::uint64_t k = 0; k < inserts; ++k) {
        Ellipse e;
        std::tie(e.center_x, e.center_y) = inside_body(0.75);
        e.semi_a = rng.uniform(0.02, 0.05);
        e.semi_b = rng.uniform(0.02, 0.05);
        e.rotation = rng.uniform(0.0, M_PI);
        e.value = rng.uniform(0.4, 0.8);
        p.ellipses.push_back(e);
    }
    return p;
}

EllipsePhantom shepp_logan() {
    constexpr double deg = M_PI / 180.0;
    // center_x, center_y, semi_a, semi_b, rotation, value
    return EllipsePhantom{{
        {0.0, 0.0, 0.69, 0.92, 0.0, 1.0},
        {0.22, 0.0, 0.11, 0.31, -18.0 * deg, -0.2},
        {-0.22, 0.0, 0.16, 0.41, 18.0 * deg, -0.2},
        {0.0, -0.0184, 0.6624, 0.874, 0.0, -0.8},
        {0.0, 0.35, 0.21, 0.25, 0.0, 0.1},
        {0.0, 0.1, 0.046, 0.046, 0.0, 0.1},
        {0.0, -0.1, 0.046, 0.046, 0.0, 0.1},
        {-0.08, -0.605, 0.046, 0.023, 0.0, 0.1},
        {0.0, -0.606, 0.023, 0.023, 0.0, 0.1},
        {0.06, -0.605, 0.023, 0.046, 0.0, 0.1},
    }};
}

EllipsePhantom centered_disk(double radius, double value) {
    return EllipsePhantom{{{0.0, 0.0, radius, radius, 0.0, value}}};
}

}  // namespace svct
