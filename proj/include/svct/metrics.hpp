#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "svct/image.hpp"

namespace svct {

// Reported for identical inputs instead of +inf.
inline constexpr double psnr_cap_db = 99.0;

// 10 log10(peak^2 / MSE), capped at psnr_cap_db.
double psnr(const Image& test, const Image& reference, double peak);

// PSNR restricted to pixel centers inside the inscribed circle x^2 + y^2 <= 1.
double psnr_inscribed(const Image& test, const Image& reference, double peak);

// max - min over a set of images (the PSNR peak for that set).
double data_range(std::span<const Image> images);

// Zero-mean normalized cross-correlation.
double ncc(const Image& a, const Image& b);

// Orientations in [0, pi) of ridges crossing a ring of the given radius
// around (x, y). A ridge counts when the ring profile has a prominent local
// maximum at both phi and phi + pi, i.e. a straight streak through the center.
std::vector<double> streak_directions(const Image& img, double x, double y, double radius,
                                      std::size_t samples = 1440);

}  // namespace svct
