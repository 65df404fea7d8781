#include "svct/image.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "svct/error.hpp"

namespace svct {

const char* to_string(ErrorKind kind) noexcept {
    switch (kind) {
        case ErrorKind::invalid_size: return "invalid-size";
        case ErrorKind::out_of_domain: return "out-of-domain";
        case ErrorKind::truncation: return "truncation";
        case ErrorKind::invalid_stride: return "invalid-stride";
        case ErrorKind::shape_mismatch: return "shape-mismatch";
        case ErrorKind::diverged: return "diverged";
        case ErrorKind::degenerate_cloud: return "degenerate-cloud";
        case ErrorKind::size_limit: return "size-limit";
        case ErrorKind::uninitialized_stats: return "uninitialized-stats";
        case ErrorKind::sample_size: return "sample-size";
        case ErrorKind::missing_artifact: return "missing-artifact";
        case ErrorKind::config: return "config";
        case ErrorKind::io: return "io";
    }
    return "unknown";
}

Image::Image(std::size_t n, double fill) : n_(n), data_(n * n, fill) {}

Image::Image(std::size_t n, std::vector<double> values) : n_(n), data_(std::move(values)) {
    require(data_.size() == n * n, ErrorKind::shape_mismatch,
            "image data length does not match n*n");
}

double Image::pixel_center_x(std::size_t col) const noexcept {
    return -1.0 + (static_cast<double>(col) + 0.5) * pixel_width();
}

double Image::pixel_center_y(std::size_t row) const noexcept {
    return 1.0 - (static_cast<double>(row) + 0.5) * pixel_width();
}

double Image::col_coord(double x) const noexcept {
    return (x + 1.0) * 0.5 * static_cast<double>(n_) - 0.5;
}

double Image::row_coord(double y) const noexcept {
    return (1.0 - y) * 0.5 * static_cast<double>(n_) - 0.5;
}

double Image::sample(double x, double y) const noexcept {
    const double u = col_coord(x);
    const double v = row_coord(y);
    const double fu = std::floor(u);
    const double fv = std::floor(v);
    const auto n = static_cast<long>(n_);
    const long c0 = static_cast<long>(fu);
    const long r0 = static_cast<long>(fv);
    if (c0 < -1 || r0 < -1 || c0 >= n || r0 >= n) return 0.0;
    const double wu = u - fu;
    const double wv = v - fv;
    auto px = [&](long r, long c) -> double {
        if (r < 0 || c < 0 || r >= n || c >= n) return 0.0;
        return data_[static_cast<std::size_t>(r * n + c)];
    };
    return (1.0 - wv) * ((1.0 - wu) * px(r0, c0) + wu * px(r0, c0 + 1)) +
           wv * ((1.0 - wu) * px(r0 + 1, c0) + wu * px(r0 + 1, c0 + 1));
}

bool Image::all_finite() const noexcept {
    return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

Image& Image::operator+=(const Image& other) {
    require(n_ == other.n_, ErrorKind::shape_mismatch, "image size mismatch");
    for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += other.data_[i];
    return *this;
}

Image& Image::operator-=(const Image& other) {
    require(n_ == other.n_, ErrorKind::shape_mismatch, "image size mismatch");
    for (std::size_t i = 0; i < data_.size(); ++i) data_[i] -= other.data_[i];
    return *this;
}

Image& Image::operator*=(double s) noexcept {
    for (double& v : data_) v *= s;
    return *this;
}

Image operator+(Image a, const Image& b) { return a += b; }
Image operator-(Image a, const Image& b) { return a -= b; }
Image operator*(double s, Image a) { return a *= s; }

double dot(const Image& a, const Image& b) {
    require(a.size() == b.size(), ErrorKind::shape_mismatch, "image size mismatch");
    return std::inner_product(a.values().begin(), a.values().end(), b.values().begin(), 0.0);
}

double l2_norm(const Image& a) { return std::sqrt(dot(a, a)); }

Sinogram::Sinogram(std::vector<double> view_angles, std::size_t detector_count, double spacing)
    : views(view_angles.size()),
      detectors(detector_count),
      detector_spacing(spacing),
      angles(std::move(view_angles)),
      data(views * detectors, 0.0) {}

double Sinogram::bin_position(std::size_t det) const noexcept {
    return (static_cast<double>(det) - 0.5 * static_cast<double>(detectors - 1)) *
           detector_spacing;
}

void Sinogram::validate() const {
    require(data.size() == views * detectors, ErrorKind::shape_mismatch,
            "sinogram data length does not match views*detectors");
    require(angles.size() == views, ErrorKind::shape_mismatch,
            "sinogram angle count does not match views");
    require(detector_spacing > 0.0, ErrorKind::out_of_domain, "detector spacing must be positive");
    for (std::size_t k = 0; k < angles.size(); ++k) {
        require(angles[k] >= 0.0 && angles[k] < M_PI, ErrorKind::out_of_domain,
                "view angle outside [0, pi)");
        require(k == 0 || angles[k] > angles[k - 1], ErrorKind::out_of_domain,
                "view angles must be strictly increasing");
    }
    require(std::all_of(data.begin(), data.end(), [](double v) { return std::isfinite(v); }),
            ErrorKind::out_of_domain, "sinogram contains non-finite values");
}

double dot(const Sinogram& a, const Sinogram& b) {
    require(a.data.size() == b.data.size(), ErrorKind::shape_mismatch, "sinogram size mismatch");
    return std::inner_product(a.data.begin(), a.data.end(), b.data.begin(), 0.0);
}

}  // namespace svct
