#include "svct/nn/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

namespace svct::nn {

double relative_error(double a, double b, double floor) {
    return std::abs(a - b) / std::max({std::abs(a), std::abs(b), floor});
}

FiniteDifference central_difference(const std::function<double()>& f, double* param, double h,
                                    const std::function<std::uint64_t()>& region,
                                    double min_step) {
    const double origin = *param;
    std::uint64_t base = 0;
    if (region) {
        f();
        base = region();
    }
    auto probe = [&](double offset, bool& same) {
        *param = origin + offset;
        const double v = f();
        if (region && region() != base) same = false;
        return v;
    };
    FiniteDifference out;
    for (double step = h; step >= min_step * (1.0 - 1e-9); step /= 10.0) {
        bool same = true;
        const double p1 = probe(step, same);
        const double m1 = probe(-step, same);
        const double p2 = probe(step / 2, same);
        const double m2 = probe(-step / 2, same);
        *param = origin;
        const double wide = (p1 - m1) / (2.0 * step);
        const double narrow = (p2 - m2) / step;
        out.derivative = (4.0 * narrow - wide) / 3.0;
        out.step = step;
        if (same) {
            out.resolved = true;
            break;
        }
    }
    *param = origin;
    return out;
}

GradCheckReport check_network_gradients(Network& net, const Tensor4& x, const Tensor4& y,
                                        double weight_decay, double h) {
    forward_backward(net, x, y, weight_decay);
    std::vector<Param> params = net.parameters();
    std::vector<std::vector<double>> analytic;
    for (const Param& p : params) analytic.emplace_back(p.grad.begin(), p.grad.end());

    auto loss = [&] { return forward_backward(net, x, y, weight_decay).loss; };
    auto region = [&] { return net.kink_signature(); };
    GradCheckReport report;
    for (std::size_t k = 0; k < params.size(); ++k) {
        for (std::size_t i = 0; i < params[k].value.size(); ++i) {
            const FiniteDifference fd = central_difference(loss, &params[k].value[i], h, region);
            if (!fd.resolved) {
                ++report.unresolved;
                continue;
            }
            if (fd.step < h) ++report.refined;
            ++report.checked;
            report.max_relative_error =
                std::max(report.max_relative_error, relative_error(analytic[k][i], fd.derivative));
        }
    }
    forward_backward(net, x, y, weight_decay);
    return report;
}

}  // namespace svct::nn
