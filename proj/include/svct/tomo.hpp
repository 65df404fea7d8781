#pragma once

#include <cstddef>
#include <vector>

#include "svct/image.hpp"

namespace svct {

// Parallel-beam acquisition geometry. Angles are k*pi/views, k = 0..views-1.
struct Geometry {
    std::size_t detectors = 0;
    double detector_spacing = 0.0;
    std::size_t views = 0;

    // 2n+1 bins at spacing sqrt(2)/n: the detector row covers the diagonal of
    // [-1,1]^2 for every rotation.
    static Geometry standard(std::size_t n, std::size_t views);

    std::vector<double> angles() const;
    // Center-to-center extent of the detector row.
    double span() const noexcept;
    // Throws invalid_size for even/zero detector counts, truncation when the
    // detector row does not cover the image diagonal.
    void validate() const;
};

// Ray-driven forward projection: bilinear samples at half-pixel steps along
// each ray, multiplied by the step length.
Sinogram project(const Image& img, const Geometry& geom);

// Same projector on the angle list and detector row of an existing sinogram.
Sinogram project_onto(const Image& img, const Sinogram& like);

// Padded FFT length used by ramp_filter for a given detector count.
std::size_t ramp_padded_length(std::size_t detectors);

// Sampled |omega| on the padded frequency grid (r2c layout, N/2+1 entries).
std::vector<double> ramp_frequency_response(std::size_t padded_length, double detector_spacing);

// Closed-form band-limited Ram-Lak kernel value at integer lag k, scaled so
// that convolution with it (no extra factor) approximates the |omega| filter.
double ramlak_kernel(long lag, double detector_spacing);

// Multiplies each view by |omega| in the frequency domain (zero-padded,
// truncated back to the original detector count).
Sinogram ramp_filter(const Sinogram& sino);

// Pixel-driven back-projection of an already filtered sinogram with linear
// detector interpolation, scaled by pi/views.
Image backproject_filtered(const Sinogram& filtered, std::size_t n);

// Filtered back-projection onto an n x n grid.
Image fbp(const Sinogram& sino, std::size_t n);

// Keeps every (views/m)-th view. Throws invalid_stride when m does not divide views.
Sinogram subsample_views(const Sinogram& sino, std::size_t m);

// Streaking-artifact image: sparse_fbp - full_fbp.
Image residual(const Image& sparse_fbp, const Image& full_fbp);

}  // namespace svct
