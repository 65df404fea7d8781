#pragma once

#include <cstddef>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "svct/image.hpp"

namespace svct::homology {

struct PointCloud {
    std::size_t dimension = 0;
    std::vector<std::vector<double>> points;

    std::size_t size() const noexcept { return points.size(); }
    void validate() const;
};

// One point per image, pixels flattened row-major. Needs >= 2 equal-size images.
PointCloud image_point_cloud(std::span<const Image> images);

// Symmetric, zero-diagonal, dense n x n matrix.
class DistanceMatrix {
public:
    DistanceMatrix() = default;
    // Validates symmetry, zero diagonal and non-negative finite entries.
    DistanceMatrix(std::size_t n, std::vector<double> entries);

    std::size_t size() const noexcept { return n_; }
    double operator()(std::size_t i, std::size_t j) const noexcept { return d_[i * n_ + j]; }
    double max_entry() const noexcept;

private:
    std::size_t n_ = 0;
    std::vector<double> d_;
};

DistanceMatrix euclidean_distances(const PointCloud& cloud);

// Pairwise Euclidean distances divided by the largest one. Throws
// degenerate_cloud when all points coincide.
DistanceMatrix normalized_distances(const PointCloud& cloud);
DistanceMatrix normalize(const DistanceMatrix& dm);

inline constexpr double infinite_death = std::numeric_limits<double>::infinity();

struct Interval {
    double birth = 0.0;
    double death = infinite_death;

    bool infinite() const noexcept { return death == infinite_death; }
    double persistence() const noexcept { return death - birth; }
    friend bool operator==(const Interval&, const Interval&) = default;
    friend auto operator<=>(const Interval&, const Interval&) = default;
};

struct Barcode {
    int dimension = 0;
    std::vector<Interval> intervals;
};

enum class H0Method { union_find, reduction };

struct RipsOptions {
    std::size_t max_points = 256;
    H0Method h0 = H0Method::union_find;
};

// Vietoris-Rips persistence in dimensions 0..max_dim (max_dim <= 1) over the
// 2-skeleton. Edge ties break lexicographically on (i, j); zero-length
// intervals are dropped. Returns one barcode per dimension, sorted.
std::vector<Barcode> rips_persistence(const DistanceMatrix& dm, int max_dim = 1,
                                      const RipsOptions& options = {});

struct BettiCurve {
    int dimension = 0;
    std::vector<double> epsilon;
    std::vector<std::size_t> beta;
};

// n evenly spaced samples covering [0, 1] inclusive.
std::vector<double> uniform_grid(std::size_t n);

// Counts intervals with birth <= eps < death at every grid value.
std::vector<BettiCurve> betti_curve(std::span<const Barcode> barcodes,
                                    std::span<const double> grid);

enum class Verdict { first_simpler, second_simpler, inconclusive };

struct ComplexityReport {
    double beta0_area_first = 0.0;
    double beta0_area_second = 0.0;
    double h1_persistence_first = 0.0;
    double h1_persistence_second = 0.0;
    Verdict verdict = Verdict::inconclusive;
};

// Trapezoid area under the beta_0 curve and under the beta_1 curve (total H1
// persistence on the grid). A cloud is "simpler" when its beta_0 area is
// strictly smaller and its H1 persistence is no greater.
ComplexityReport complexity_verdict(std::span<const BettiCurve> first,
                                    std::span<const BettiCurve> second);

std::string verdict_label(Verdict v, const std::string& first_name,
                          const std::string& second_name);

}  // namespace svct::homology
