#pragma once

#include <cstdint>
#include <utility>
#include <vector>

#include "svct/image.hpp"

namespace svct {

struct Ellipse {
    double center_x = 0.0;
    double center_y = 0.0;
    double semi_a = 0.0;  // along the rotated x axis
    double semi_b = 0.0;
    double rotation = 0.0;  // radians, counter-clockwise
    double value = 0.0;     // additive attenuation

    bool contains(double x, double y) const noexcept;
};

struct EllipsePhantom {
    std::vector<Ellipse> ellipses;
};

inline constexpr std::size_t min_raster_size = 16;

// Pixel-center containment, no anti-aliasing. Throws invalid_size for n < 16.
Image rasterize(const EllipsePhantom& phantom, std::size_t n);

// Single-pixel impulses at the pixels nearest each position; coincident
// positions add. Throws out_of_domain for positions outside [-1,1]^2.
Image point_targets(const std::vector<std::pair<double, double>>& positions, double amplitude,
                    std::size_t n);

// Deterministic random "patient-like" phantom: an elliptical body with a few
// soft-tissue inclusions and small dense inserts, all inside the unit disk.
EllipsePhantom random_phantom(std::uint64_t seed);

// Shepp-Logan style head phantom with non-negative attenuation values.
EllipsePhantom shepp_logan();

EllipsePhantom centered_disk(double radius, double value = 1.0);

}  // namespace svct
