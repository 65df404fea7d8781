#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>

#include "svct/nn/network.hpp"

namespace svct::nn {

// |a - b| / max(|a|, |b|, floor).
double relative_error(double a, double b, double floor = 1e-6);

struct FiniteDifference {
    double derivative = 0.0;
    double step = 0.0;  // step that produced it
    bool resolved = false;
};

// Richardson-combined central differences at h and h/2 of f with respect to
// *param. When region() is given, every probe must evaluate inside the same
// linear region as the unperturbed point; otherwise h shrinks tenfold, down
// to min_step. *param is restored on return.
FiniteDifference central_difference(const std::function<double()>& f, double* param, double h,
                                    const std::function<std::uint64_t()>& region = {},
                                    double min_step = 1e-7);

struct GradCheckReport {
    double max_relative_error = 0.0;
    std::size_t checked = 0;
    std::size_t refined = 0;     // entries that needed a smaller step
    std::size_t unresolved = 0;  // entries with a kink inside every step
};

// Compares every parameter gradient of forward_backward against finite
// differences of its loss (train-mode batch statistics).
GradCheckReport check_network_gradients(Network& net, const Tensor4& x, const Tensor4& y,
                                        double weight_decay, double h = 1e-3);

}  // namespace svct::nn
