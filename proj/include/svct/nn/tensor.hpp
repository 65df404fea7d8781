#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <vector>

namespace svct::nn {

struct Shape4 {
    std::size_t n = 0, c = 0, h = 0, w = 0;

    std::size_t count() const noexcept { return n * c * h * w; }
    std::size_t plane() const noexcept { return h * w; }
    friend bool operator==(const Shape4&, const Shape4&) = default;
};

// Dense (batch, channel, height, width) array, row-major.
class Tensor4 {
public:
    Tensor4() = default;
    explicit Tensor4(Shape4 shape, double fill = 0.0) : shape_(shape), data_(shape.count(), fill) {}
    Tensor4(std::size_t n, std::size_t c, std::size_t h, std::size_t w, double fill = 0.0)
        : Tensor4(Shape4{n, c, h, w}, fill) {}

    const Shape4& shape() const noexcept { return shape_; }
    std::size_t size() const noexcept { return data_.size(); }

    double& operator()(std::size_t n, std::size_t c, std::size_t y, std::size_t x) noexcept {
        return data_[((n * shape_.c + c) * shape_.h + y) * shape_.w + x];
    }
    double operator()(std::size_t n, std::size_t c, std::size_t y, std::size_t x) const noexcept {
        return data_[((n * shape_.c + c) * shape_.h + y) * shape_.w + x];
    }

    double* data() noexcept { return data_.data(); }
    const double* data() const noexcept { return data_.data(); }
    std::span<double> values() noexcept { return data_; }
    std::span<const double> values() const noexcept { return data_; }

    // Pointer to the (n, c) plane.
    double* plane(std::size_t n, std::size_t c) noexcept {
        return data_.data() + (n * shape_.c + c) * shape_.plane();
    }
    const double* plane(std::size_t n, std::size_t c) const noexcept {
        return data_.data() + (n * shape_.c + c) * shape_.plane();
    }

    void fill(double v) noexcept { std::fill(data_.begin(), data_.end(), v); }
    bool all_finite() const noexcept {
        return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
    }

    friend bool operator==(const Tensor4&, const Tensor4&) = default;

private:
    Shape4 shape_;
    std::vector<double> data_;
};

}  // namespace svct::nn
