#pragma once

#include <cstddef>
#include <optional>
#include <vector>

#include "svct/image.hpp"

namespace svct {

// Exact transpose of project(): scatters every ray sample back with the same
// bilinear weights. <project(x), y> == <x, backproject(y)> up to rounding.
Image backproject(const Sinogram& sino, std::size_t n);

// Applies A^T A to x for the sinogram's geometry.
Image normal_operator(const Image& x, const Sinogram& like);

// Power-method estimate of ||A^T A||.
double normal_operator_norm(const Sinogram& like, std::size_t n, std::size_t iterations = 30);

struct TvValueGrad {
    double value = 0.0;
    Image gradient;
};

// Smoothed isotropic TV: sum_ij sqrt(Dx^2 + Dy^2 + eps^2) with forward
// differences and Neumann (replicate) boundary, plus its exact gradient.
TvValueGrad tv_value_grad(const Image& img, double eps);

struct TvConfig {
    double lambda_tv = 0.0;
    std::size_t iterations = 100;
    double smoothing_eps = 1e-2;
    // Halvings tried before an iteration gives up and keeps the current iterate.
    std::size_t max_backtracks = 40;

    void validate() const;
};

struct TvResult {
    Image image;
    // Objective F(x_k) for k = 0 (FBP seed) .. iterations.
    std::vector<double> trace;
    // PSNR against a reference per entry of trace, when one was supplied.
    std::vector<double> psnr;
    double lipschitz = 0.0;
};

// Gradient descent on 1/2 ||A x - b||^2 + lambda * TV_eps(x) from the FBP
// image, step 1/L with halving on any objective increase.
TvResult reconstruct_tv(const Sinogram& sino, std::size_t n, const TvConfig& cfg,
                        const Image* reference = nullptr, double reference_peak = 0.0);

}  // namespace svct
