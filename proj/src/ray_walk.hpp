#pragma once

// Shared ray traversal for the forward projector and its exact adjoint.

#include <cmath>
#include <cstddef>

namespace svct::detail {

// Visits the bilinear footprint of every sample on the ray
//   p(sigma) = t * (cos, sin) + sigma * (-sin, cos)
// through an n x n grid on [-1,1]^2. Samples sit at sigma = (k + 1/2) h for a
// symmetric range of k, h = half a pixel. visit(pixel_index, weight) receives
// weights that already include the step length h.
template <typename Visit>
inline void walk_ray(std::size_t n, double t, double cos_t, double sin_t, Visit&& visit) {
    const double nd = static_cast<double>(n);
    const double h = 1.0 / nd;
    const double radius = std::sqrt(2.0) + 2.0 / nd;
    const double reach2 = radius * radius - t * t;
    if (reach2 <= 0.0) return;
    const auto half = static_cast<long>(std::ceil(std::sqrt(reach2) / h));
    const long ln = static_cast<long>(n);

    // Grid coordinates: col = (x+1) n/2 - 1/2, row = (1-y) n/2 - 1/2.
    const double scale = 0.5 * nd;
    const double x0 = t * cos_t;
    const double y0 = t * sin_t;
    const double du = -sin_t * h * scale;
    const double dv = -cos_t * h * scale;
    const double u_base = (x0 + 1.0) * scale - 0.5;
    const double v_base = (1.0 - y0) * scale - 0.5;

    for (long k = -half; k < half; ++k) {
        const double kk = static_cast<double>(k) + 0.5;
        const double u = u_base + kk * du;
        const double v = v_base + kk * dv;
        const double fu = std::floor(u);
        const double fv = std::floor(v);
        const long c0 = static_cast<long>(fu);
        const long r0 = static_cast<long>(fv);
        if (c0 < -1 || r0 < -1 || c0 >= ln || r0 >= ln) continue;
        const double wu = u - fu;
        const double wv = v - fv;
        const double w00 = (1.0 - wv) * (1.0 - wu) * h;
        const double w01 = (1.0 - wv) * wu * h;
        const double w10 = wv * (1.0 - wu) * h;
        const double w11 = wv * wu * h;
        if (c0 >= 0 && r0 >= 0 && c0 + 1 < ln && r0 + 1 < ln) {
            const auto base = static_cast<std::size_t>(r0 * ln + c0);
            visit(base, w00);
            visit(base + 1, w01);
            visit(base + n, w10);
            visit(base + n + 1, w11);
            continue;
        }
        auto edge = [&](long r, long c, double w) {
            if (r >= 0 && c >= 0 && r < ln && c < ln) visit(static_cast<std::size_t>(r * ln + c), w);
        };
        edge(r0, c0, w00);
        edge(r0, c0 + 1, w01);
        edge(r0 + 1, c0, w10);
        edge(r0 + 1, c0 + 1, w11);
    }
}

}  // namespace svct::detail
