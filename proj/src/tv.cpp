#include "svct/tv.hpp"

#include <cmath>
#include <string>

#include "ray_walk.hpp"
#include "svct/error.hpp"
#include "svct/metrics.hpp"
#include "svct/random.hpp"
#include "svct/tomo.hpp"

namespace svct {

namespace {

Geometry geometry_of(const Sinogram& sino) {
    return Geometry{sino.detectors, sino.detector_spacing, sino.views};
}

double data_term(const Image& x, const Sinogram& sino, Sinogram* residual_out) {
    Sinogram r = project_onto(x, sino);
    double sum = 0.0;
    for (std::size_t i = 0; i < r.data.size(); ++i) {
        r.data[i] -= sino.data[i];
        sum += r.data[i] * r.data[i];
    }
    if (residual_out != nullptr) *residual_out = std::move(r);
    return 0.5 * sum;
}

}  // namespace

Image backproject(const Sinogram& sino, std::size_t n) {
    sino.validate();
    require(n >= 1, ErrorKind::invalid_size, "image size must be positive");
    Image img(n);
    auto px = img.values();
    for (std::size_t v = 0; v < sino.views; ++v) {
        const double c = std::cos(sino.angles[v]);
        const double s = std::sin(sino.angles[v]);
        for (std::size_t d = 0; d < sino.detectors; ++d) {
            const double val = sino.at(v, d);
            if (val == 0.0) continue;
            detail::walk_ray(n, sino.bin_position(d), c, s,
                             [&](std::size_t idx, double w) { px[idx] += w * val; });
        }
    }
    return img;
}

Image normal_operator(const Image& x, const Sinogram& like) {
    return backproject(project_onto(x, like), x.size());
}

double normal_operator_norm(const Sinogram& like, std::size_t n, std::size_t iterations) {
    geometry_of(like).validate();
    Rng rng(0x5eed);
    Image v(n);
    for (double& p : v.values()) p = 1.0 + 0.1 * rng.uniform();
    v *= 1.0 / l2_norm(v);
    double estimate = 0.0;
    for (std::size_t k = 0; k < iterations; ++k) {
        Image w = normal_operator(v, like);
        estimate = l2_norm(w);
        if (estimate == 0.0) break;
        v = (1.0 / estimate) * std::move(w);
    }
    return estimate;
}

TvValueGrad tv_value_grad(const Image& img, double eps) {
    require(eps > 0.0, ErrorKind::out_of_domain, "TV smoothing eps must be positive");
    const std::size_t n = img.size();
    TvValueGrad out{0.0, Image(n)};
    const double eps2 = eps * eps;
    for (std::size_t r = 0; r < n; ++r) {
        for (std::size_t c = 0; c < n; ++c) {
            const double x = img(r, c);
            const double dx = c + 1 < n ? img(r, c + 1) - x : 0.0;
            const double dy = r + 1 < n ? img(r + 1, c) - x : 0.0;
            const double mag = std::sqrt(dx * dx + dy * dy + eps2);
            out.value += mag;
            out.gradient(r, c) -= (dx + dy) / mag;
            if (c + 1 < n) out.gradient(r, c + 1) += dx / mag;
            if (r + 1 < n) out.gradient(r + 1, c) += dy / mag;
        }
    }
    return out;
}

void TvConfig::validate() const {
    require(iterations >= 1, ErrorKind::config, "TV iterations must be >= 1");
    require(smoothing_eps > 0.0, ErrorKind::config, "TV smoothing eps must be > 0");
    require(lambda_tv >= 0.0, ErrorKind::config, "TV lambda must be >= 0");
}

TvResult reconstruct_tv(const Sinogram& sino, std::size_t n, const TvConfig& cfg,
                        const Image* reference, double reference_peak) {
    cfg.validate();
    sino.validate();

    TvResult result;
    result.lipschitz = normal_operator_norm(sino, n);
    require(result.lipschitz > 0.0, ErrorKind::out_of_domain, "normal operator has zero norm");
    const double step0 = 1.0 / result.lipschitz;

    auto objective = [&](const Image& x, Sinogram* r) {
        return data_term(x, sino, r) + cfg.lambda_tv * tv_value_grad(x, cfg.smoothing_eps).value;
    };
    auto record_psnr = [&](const Image& x) {
        if (reference != nullptr) result.psnr.push_back(psnr(x, *reference, reference_peak));
    };

    Image x = fbp(sino, n);
    Sinogram r;
    double f = objective(x, &r);
    if (!std::isfinite(f)) throw DivergedError(0, "TV objective is not finite");
    result.trace.push_back(f);
    record_psnr(x);

    for (std::size_t it = 1; it <= cfg.iterations; ++it) {
        Image grad = backproject(r, n);
        if (cfg.lambda_tv > 0.0) {
            Image tv = tv_value_grad(x, cfg.smoothing_eps).gradient;
            tv *= cfg.lambda_tv;
            grad += tv;
        }
        double step = step0;
        for (std::size_t b = 0; b <= cfg.max_backtracks; ++b, step *= 0.5) {
            Image trial = x;
            auto tv = trial.values();
            auto g = grad.values();
            for (std::size_t i = 0; i < tv.size(); ++i) tv[i] -= step * g[i];
            Sinogram trial_r;
            const double ft = objective(trial, &trial_r);
            if (!std::isfinite(ft)) throw DivergedError(it, "TV objective is not finite");
            if (ft <= f) {
                x = std::move(trial);
                r = std::move(trial_r);
                f = ft;
                break;
            }
        }
        // Without a decrease inside the backtracking budget x stays put.
        result.trace.push_back(f);
        record_psnr(x);
    }
    result.image = std::move(x);
    return result;
}

}  // namespace svct
