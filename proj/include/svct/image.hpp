#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace svct {

// Square n x n grid of attenuation values, row-major.
//
// The grid spans [-1,1]^2 with x pointing right and y pointing up. Pixel
// (0,0) is the top-left corner; its center sits at (-1 + 1/n, 1 - 1/n).
// Every module that maps between pixels and world coordinates goes through
// pixel_center_x/y and the inverse helpers below.
class Image {
public:
    Image() = default;
    explicit Image(std::size_t n, double fill = 0.0);
    Image(std::size_t n, std::vector<double> values);

    std::size_t width() const noexcept { return n_; }
    std::size_t height() const noexcept { return n_; }
    std::size_t size() const noexcept { return n_; }
    std::size_t pixel_count() const noexcept { return data_.size(); }

    double& operator()(std::size_t row, std::size_t col) noexcept { return data_[row * n_ + col]; }
    double operator()(std::size_t row, std::size_t col) const noexcept {
        return data_[row * n_ + col];
    }

    std::span<double> values() noexcept { return data_; }
    std::span<const double> values() const noexcept { return data_; }

    // Side length of one pixel in world units.
    double pixel_width() const noexcept { return 2.0 / static_cast<double>(n_); }
    double pixel_center_x(std::size_t col) const noexcept;
    double pixel_center_y(std::size_t row) const noexcept;
    // Continuous (fractional) column/row whose integer values are pixel centers.
    double col_coord(double x) const noexcept;
    double row_coord(double y) const noexcept;

    // Bilinear sample at world (x, y); the grid is zero outside its support.
    double sample(double x, double y) const noexcept;

    bool all_finite() const noexcept;

    Image& operator+=(const Image& other);
    Image& operator-=(const Image& other);
    Image& operator*=(double s) noexcept;

    friend bool operator==(const Image&, const Image&) = default;

private:
    std::size_t n_ = 0;
    std::vector<double> data_;
};

Image operator+(Image a, const Image& b);
Image operator-(Image a, const Image& b);
Image operator*(double s, Image a);

double dot(const Image& a, const Image& b);
double l2_norm(const Image& a);

// Line integrals indexed by (view, detector), view-major.
struct Sinogram {
    std::size_t views = 0;
    std::size_t detectors = 0;
    double detector_spacing = 0.0;
    std::vector<double> angles;
    std::vector<double> data;

    Sinogram() = default;
    Sinogram(std::vector<double> view_angles, std::size_t detector_count, double spacing);

    double& at(std::size_t view, std::size_t det) noexcept { return data[view * detectors + det]; }
    double at(std::size_t view, std::size_t det) const noexcept {
        return data[view * detectors + det];
    }
    std::span<double> row(std::size_t view) noexcept {
        return std::span<double>(data).subspan(view * detectors, detectors);
    }
    std::span<const double> row(std::size_t view) const noexcept {
        return std::span<const double>(data).subspan(view * detectors, detectors);
    }

    // Detector coordinate t of the bin center; the middle bin is t = 0.
    double bin_position(std::size_t det) const noexcept;

    // Throws shape_mismatch / out_of_domain when the invariants are broken.
    void validate() const;

    friend bool operator==(const Sinogram&, const Sinogram&) = default;
};

double dot(const Sinogram& a, const Sinogram& b);

}  // namespace svct
