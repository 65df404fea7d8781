#include "svct/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "svct/error.hpp"

namespace svct {

namespace {

double to_db(double peak, double mse) {
    if (mse <= 0.0) return psnr_cap_db;
    return std::min(psnr_cap_db, 10.0 * std::log10(peak * peak / mse));
}

}  // namespace

double psnr(const Image& test, const Image& reference, double peak) {
    require(test.size() == reference.size(), ErrorKind::shape_mismatch, "PSNR size mismatch");
    require(peak > 0.0, ErrorKind::out_of_domain, "PSNR peak must be positive");
    const auto a = test.values();
    const auto b = reference.values();
    double sum = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) sum += (a[i] - b[i]) * (a[i] - b[i]);
    return to_db(peak, sum / static_cast<double>(a.size()));
}

double psnr_inscribed(const Image& test, const Image& reference, double peak) {
    require(test.size() == reference.size(), ErrorKind::shape_mismatch, "PSNR size mismatch");
    require(peak > 0.0, ErrorKind::out_of_domain, "PSNR peak must be positive");
    const std::size_t n = test.size();
    double sum = 0.0;
    std::size_t count = 0;
    for (std::size_t r = 0; r < n; ++r) {
        const double y = test.pixel_center_y(r);
        for (std::size_t c = 0; c < n; ++c) {
            const double x = test.pixel_center_x(c);
            if (x * x + y * y > 1.0) continue;
            const double e = test(r, c) - reference(r, c);
            sum += e * e;
            ++count;
        }
    }
    return to_db(peak, sum / static_cast<double>(count));
}

double data_range(std::span<const Image> images) {
    double lo = std::numeric_limits<double>::infinity();
    double hi = -lo;
    for (const Image& img : images) {
        for (double v : img.values()) {
            lo = std::min(lo, v);
            hi = std::max(hi, v);
        }
    }
    require(hi >= lo, ErrorKind::out_of_domain, "data range of an empty set");
    return hi - lo;
}

double ncc(const Image& a, const Image& b) {
    require(a.size() == b.size(), ErrorKind::shape_mismatch, "NCC size mismatch");
    const auto x = a.values();
    const auto y = b.values();
    const auto count = static_cast<double>(x.size());
    double mx = 0.0, my = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        mx += x[i];
        my += y[i];
    }
    mx /= count;
    my /= count;
    double sxy = 0.0, sxx = 0.0, syy = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        sxy += (x[i] - mx) * (y[i] - my);
        sxx += (x[i] - mx) * (x[i] - mx);
        syy += (y[i] - my) * (y[i] - my);
    }
    if (sxx == 0.0 || syy == 0.0) return 0.0;
    return sxy / std::sqrt(sxx * syy);
}

std::vector<double> streak_directions(const Image& img, double x, double y, double radius,
                                      std::size_t samples) {
    require(samples >= 8 && samples % 2 == 0, ErrorKind::invalid_size,
            "ring sample count must be even and >= 8");
    std::vector<double> profile(samples);
    for (std::size_t k = 0; k < samples; ++k) {
        const double phi = 2.0 * M_PI * static_cast<double>(k) / static_cast<double>(samples);
        profile[k] = img.sample(x + radius * std::cos(phi), y + radius * std::sin(phi));
    }
    std::vector<double> sorted = profile;
    std::nth_element(sorted.begin(), sorted.begin() + samples / 2, sorted.end());
    const double median = sorted[samples / 2];
    const double peak = *std::max_element(profile.begin(), profile.end());
    const double threshold = median + 0.25 * (peak - median);

    // Prominent circular local maxima.
    std::vector<bool> is_max(samples, false);
    for (std::size_t k = 0; k < samples; ++k) {
        const double prev = profile[(k + samples - 1) % samples];
        const double next = profile[(k + 1) % samples];
        is_max[k] = profile[k] >= threshold && profile[k] > prev && profile[k] >= next;
    }

    // A straight streak crosses the ring twice, half a turn apart.
    const std::size_t half = samples / 2;
    const std::size_t slack = std::max<std::size_t>(1, samples / 360);
    std::vector<std::size_t> paired;
    for (std::size_t k = 0; k < samples; ++k) {
        if (!is_max[k]) continue;
        for (std::size_t d = 0; d <= 2 * slack; ++d) {
            if (is_max[(k + half + samples - slack + d) % samples]) {
                paired.push_back(k % half);
                break;
            }
        }
    }
    // Merge crossings that land within a degree or so of each other (mod pi).
    std::sort(paired.begin(), paired.end());
    paired.erase(std::unique(paired.begin(), paired.end()), paired.end());
    std::vector<double> directions;
    std::size_t cluster_start = 0;
    for (std::size_t i = 0; i < paired.size(); ++i) {
        const bool last = i + 1 == paired.size();
        if (!last && paired[i + 1] - paired[i] <= 2 * slack) continue;
        const std::size_t mid = (paired[cluster_start] + paired[i]) / 2;
        directions.push_back(M_PI * static_cast<double>(mid) / static_cast<double>(half));
        cluster_start = i + 1;
    }
    // Clusters touching both ends of [0, pi) are the same orientation.
    if (directions.size() > 1 && paired.front() + half - paired.back() <= 2 * slack) {
        directions.erase(directions.begin());
    }
    return directions;
}

}  // namespace svct
