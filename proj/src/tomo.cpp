#include "svct/tomo.hpp"

#include <fftw3.h>

#include <algorithm>
#include <cmath>
#include <memory>
#include <mutex>
#include <string>
#include <type_traits>

#include "ray_walk.hpp"
#include "svct/error.hpp"
#include "svct/parallel.hpp"

namespace svct {

namespace {

// The FFTW planner is not re-entrant.
std::mutex& planner_mutex() {
    static std::mutex m;
    return m;
}

struct FftwDeleter {
    void operator()(void* p) const noexcept { fftw_free(p); }
};

struct PlanDeleter {
    void operator()(fftw_plan p) const noexcept {
        std::lock_guard lock(planner_mutex());
        fftw_destroy_plan(p);
    }
};

using Plan = std::unique_ptr<std::remove_pointer_t<fftw_plan>, PlanDeleter>;

}  // namespace

Geometry Geometry::standard(std::size_t n, std::size_t views) {
    require(n >= 1, ErrorKind::invalid_size, "image size must be positive");
    return Geometry{2 * n + 1, std::sqrt(2.0) / static_cast<double>(n), views};
}

std::vector<double> Geometry::angles() const {
    std::vector<double> a(views);
    for (std::size_t k = 0; k < views; ++k) {
        a[k] = static_cast<double>(k) * M_PI / static_cast<double>(views);
    }
    return a;
}

double Geometry::span() const noexcept {
    return static_cast<double>(detectors - 1) * detector_spacing;
}

void Geometry::validate() const {
    require(views >= 1, ErrorKind::invalid_size, "geometry needs at least one view");
    require(detectors >= 3 && detectors % 2 == 1, ErrorKind::invalid_size,
            "detector count must be odd and >= 3, got " + std::to_string(detectors));
    require(detector_spacing > 0.0, ErrorKind::invalid_size, "detector spacing must be positive");
    const double diagonal = 2.0 * std::sqrt(2.0);
    require(span() >= diagonal * (1.0 - 1e-9), ErrorKind::truncation,
            "detector span " + std::to_string(span()) + " is smaller than the image diagonal");
}

Sinogram project(const Image& img, const Geometry& geom) {
    geom.validate();
    return project_onto(img, Sinogram(geom.angles(), geom.detectors, geom.detector_spacing));
}

Sinogram project_onto(const Image& img, const Sinogram& like) {
    require(img.size() >= 1, ErrorKind::invalid_size, "empty image");
    Sinogram sino(like.angles, like.detectors, like.detector_spacing);
    const std::span<const double> px = img.values();
    parallel_for(0, sino.views, [&](std::size_t view) {
        const double c = std::cos(sino.angles[view]);
        const double s = std::sin(sino.angles[view]);
        for (std::size_t d = 0; d < sino.detectors; ++d) {
            double sum = 0.0;
            detail::walk_ray(img.size(), sino.bin_position(d), c, s,
                             [&](std::size_t idx, double w) { sum += w * px[idx]; });
            sino.at(view, d) = sum;
        }
    });
    return sino;
}

std::size_t ramp_padded_length(std::size_t detectors) {
    std::size_t n = 1;
    while (n < 2 * detectors) n <<= 1;
    return n;
}

std::vector<double> ramp_frequency_response(std::size_t padded_length, double detector_spacing) {
    std::vector<double> h(padded_length / 2 + 1);
    const double df = 1.0 / (static_cast<double>(padded_length) * detector_spacing);
    for (std::size_t m = 0; m < h.size(); ++m) h[m] = static_cast<double>(m) * df;
    return h;
}

double ramlak_kernel(long lag, double detector_spacing) {
    if (lag == 0) return 1.0 / (4.0 * detector_spacing);
    if (lag % 2 == 0) return 0.0;
    const auto k = static_cast<double>(lag);
    return -1.0 / (M_PI * M_PI * k * k * detector_spacing);
}

Sinogram ramp_filter(const Sinogram& sino) {
    sino.validate();
    require(sino.detectors >= 3, ErrorKind::invalid_size, "ramp filter needs >= 3 detectors");

    const std::size_t n = ramp_padded_length(sino.detectors);
    const std::size_t nc = n / 2 + 1;
    std::unique_ptr<double, FftwDeleter> real(static_cast<double*>(fftw_malloc(sizeof(double) * n)));
    std::unique_ptr<fftw_complex, FftwDeleter> spec(
        static_cast<fftw_complex*>(fftw_malloc(sizeof(fftw_complex) * nc)));
    Plan forward, inverse;
    {
        std::lock_guard lock(planner_mutex());
        forward.reset(fftw_plan_dft_r2c_1d(static_cast<int>(n), real.get(), spec.get(),
                                           FFTW_ESTIMATE));
        inverse.reset(fftw_plan_dft_c2r_1d(static_cast<int>(n), spec.get(), real.get(),
                                           FFTW_ESTIMATE));
    }

    // FFTW transforms are unnormalized; fold 1/N into the response.
    std::vector<double> response = ramp_frequency_response(n, sino.detector_spacing);
    for (double& r : response) r /= static_cast<double>(n);

    Sinogram out = sino;
    for (std::size_t view = 0; view < sino.views; ++view) {
        const auto row = sino.row(view);
        std::fill(real.get(), real.get() + n, 0.0);
        std::copy(row.begin(), row.end(), real.get());
        fftw_execute(forward.get());
        for (std::size_t m = 0; m < nc; ++m) {
            spec.get()[m][0] *= response[m];
            spec.get()[m][1] *= response[m];
        }
        fftw_execute(inverse.get());
        // sum_m |w_m| e^{...} / N already equals dt * (band-limited kernel),
        // i.e. the discretized convolution integral.
        auto dst = out.row(view);
        std::copy(real.get(), real.get() + sino.detectors, dst.begin());
        if (!std::all_of(dst.begin(), dst.end(), [](double v) { return std::isfinite(v); })) {
            throw DivergedError(view, "ramp-filtered view is not finite");
        }
    }
    return out;
}

Image backproject_filtered(const Sinogram& filtered, std::size_t n) {
    filtered.validate();
    require(n >= 1, ErrorKind::invalid_size, "image size must be positive");
    Image img(n);
    std::vector<double> cs(filtered.views), sn(filtered.views);
    for (std::size_t v = 0; v < filtered.views; ++v) {
        cs[v] = std::cos(filtered.angles[v]);
        sn[v] = std::sin(filtered.angles[v]);
    }
    const double center = 0.5 * static_cast<double>(filtered.detectors - 1);
    const double inv_dt = 1.0 / filtered.detector_spacing;
    const auto last = static_cast<long>(filtered.detectors) - 1;
    // Discretizes the angular integral over [0, pi).
    const double weight = M_PI / static_cast<double>(filtered.views);

    parallel_for(0, n, [&](std::size_t r) {
        const double y = img.pixel_center_y(r);
        for (std::size_t c = 0; c < n; ++c) {
            const double x = img.pixel_center_x(c);
            double sum = 0.0;
            for (std::size_t v = 0; v < filtered.views; ++v) {
                const double u = (x * cs[v] + y * sn[v]) * inv_dt + center;
                const double fu = std::floor(u);
                const long d0 = static_cast<long>(fu);
                if (d0 < 0 || d0 > last) continue;
                const double w = u - fu;
                const auto row = filtered.row(v);
                const double a = row[static_cast<std::size_t>(d0)];
                const double b = d0 < last ? row[static_cast<std::size_t>(d0 + 1)] : 0.0;
                sum += (1.0 - w) * a + w * b;
            }
            img(r, c) = sum * weight;
        }
    });
    return img;
}

Image fbp(const Sinogram& sino, std::size_t n) {
    return backproject_filtered(ramp_filter(sino), n);
}

Sinogram subsample_views(const Sinogram& sino, std::size_t m) {
    sino.validate();
    require(m >= 1 && m <= sino.views && sino.views % m == 0, ErrorKind::invalid_stride,
            std::to_string(m) + " views do not evenly subsample " + std::to_string(sino.views));
    const std::size_t stride = sino.views / m;
    std::vector<double> angles(m);
    for (std::size_t k = 0; k < m; ++k) angles[k] = sino.angles[k * stride];
    Sinogram out(std::move(angles), sino.detectors, sino.detector_spacing);
    for (std::size_t k = 0; k < m; ++k) {
        const auto src = sino.row(k * stride);
        std::copy(src.begin(), src.end(), out.row(k).begin());
    }
    return out;
}

Image residual(const Image& sparse_fbp, const Image& full_fbp) {
    require(sparse_fbp.size() == full_fbp.size(), ErrorKind::shape_mismatch,
            "residual inputs differ in size");
    return sparse_fbp - full_fbp;
}

}  // namespace svct
