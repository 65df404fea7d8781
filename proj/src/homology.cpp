#include "svct/homology.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <tuple>

#include "svct/error.hpp"

namespace svct::homology {

void PointCloud::validate() const {
    for (const auto& p : points) {
        require(p.size() == dimension, ErrorKind::shape_mismatch, "point dimension mismatch");
        require(std::all_of(p.begin(), p.end(), [](double v) { return std::isfinite(v); }),
                ErrorKind::out_of_domain, "point cloud contains non-finite coordinates");
    }
}

PointCloud image_point_cloud(std::span<const Image> images) {
    require(images.size() >= 2, ErrorKind::sample_size, "point cloud needs at least 2 images");
    PointCloud cloud;
    cloud.dimension = images.front().pixel_count();
    for (const Image& img : images) {
        require(img.pixel_count() == cloud.dimension, ErrorKind::shape_mismatch,
                "point cloud images differ in size");
        cloud.points.emplace_back(img.values().begin(), img.values().end());
    }
    cloud.validate();
    return cloud;
}

DistanceMatrix::DistanceMatrix(std::size_t n, std::vector<double> entries)
    : n_(n), d_(std::move(entries)) {
    require(d_.size() == n * n, ErrorKind::shape_mismatch, "distance matrix must be n*n");
    for (std::size_t i = 0; i < n; ++i) {
        require((*this)(i, i) == 0.0, ErrorKind::out_of_domain, "distance diagonal must be zero");
        for (std::size_t j = i + 1; j < n; ++j) {
            const double v = (*this)(i, j);
            require(v == (*this)(j, i), ErrorKind::out_of_domain,
                    "distance matrix must be symmetric");
            require(std::isfinite(v) && v >= 0.0, ErrorKind::out_of_domain,
                    "distances must be finite and non-negative");
        }
    }
}

double DistanceMatrix::max_entry() const noexcept {
    return d_.empty() ? 0.0 : *std::max_element(d_.begin(), d_.end());
}

DistanceMatrix euclidean_distances(const PointCloud& cloud) {
    cloud.validate();
    const std::size_t n = cloud.size();
    std::vector<double> d(n * n, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = i + 1; j < n; ++j) {
            const auto& a = cloud.points[i];
            const auto& b = cloud.points[j];
            double s = 0.0;
            for (std::size_t k = 0; k < a.size(); ++k) s += (a[k] - b[k]) * (a[k] - b[k]);
            d[i * n + j] = d[j * n + i] = std::sqrt(s);
        }
    }
    return DistanceMatrix(n, std::move(d));
}

DistanceMatrix normalize(const DistanceMatrix& dm) {
    const double top = dm.max_entry();
    require(top > 0.0, ErrorKind::degenerate_cloud,
            "all points coincide; distance normalization is undefined");
    const std::size_t n = dm.size();
    std::vector<double> d(n * n);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < n; ++j) d[i * n + j] = dm(i, j) / top;
    }
    return DistanceMatrix(n, std::move(d));
}

DistanceMatrix normalized_distances(const PointCloud& cloud) {
    require(cloud.size() >= 2, ErrorKind::sample_size, "need at least 2 points");
    return normalize(euclidean_distances(cloud));
}

namespace {

struct Edge {
    double value;
    std::uint32_t i, j;
};

struct Triangle {
    double value;
    std::uint32_t max_edge;  // filtration position of its longest edge
    std::uint32_t apex;
    std::array<std::uint32_t, 3> edges;
};

using Column = std::vector<std::uint32_t>;

// Symmetric difference of two sorted columns (addition over GF(2)).
void add_column(Column& target, const Column& source, Column& scratch) {
    scratch.clear();
    std::set_symmetric_difference(target.begin(), target.end(), source.begin(), source.end(),
                                  std::back_inserter(scratch));
    target.swap(scratch);
}

// Standard left-to-right column reduction. Returns the pivot (lowest row) of
// each reduced column, or -1 for columns that reduce to zero.
std::vector<std::int64_t> reduce(std::vector<Column>& columns, std::size_t rows) {
    std::vector<std::int64_t> owner(rows, -1);
    std::vector<std::int64_t> low(columns.size(), -1);
    Column scratch;
    for (std::size_t c = 0; c < columns.size(); ++c) {
        Column& col = columns[c];
        while (!col.empty()) {
            const std::uint32_t pivot = col.back();
            const std::int64_t other = owner[pivot];
            if (other < 0) {
                owner[pivot] = static_cast<std::int64_t>(c);
                low[c] = pivot;
                break;
            }
            add_column(col, columns[static_cast<std::size_t>(other)], scratch);
        }
    }
    return low;
}

std::vector<Edge> sorted_edges(const DistanceMatrix& dm) {
    const auto n = static_cast<std::uint32_t>(dm.size());
    std::vector<Edge> edges;
    edges.reserve(static_cast<std::size_t>(n) * (n - 1) / 2);
    for (std::uint32_t i = 0; i < n; ++i) {
        for (std::uint32_t j = i + 1; j < n; ++j) edges.push_back({dm(i, j), i, j});
    }
    std::sort(edges.begin(), edges.end(), [](const Edge& a, const Edge& b) {
        return std::tie(a.value, a.i, a.j) < std::tie(b.value, b.i, b.j);
    });
    return edges;
}

Barcode h0_union_find(std::size_t n, const std::vector<Edge>& edges) {
    std::vector<std::uint32_t> parent(n);
    std::iota(parent.begin(), parent.end(), 0u);
    auto find = [&](std::uint32_t x) {
        while (parent[x] != x) {
            parent[x] = parent[parent[x]];
            x = parent[x];
        }
        return x;
    };
    Barcode bc{0, {}};
    for (const Edge& e : edges) {
        const std::uint32_t a = find(e.i);
        const std::uint32_t b = find(e.j);
        if (a == b) continue;
        // Every vertex is born at 0, so the smaller root index is the elder.
        const std::uint32_t elder = std::min(a, b);
        const std::uint32_t younger = std::max(a, b);
        parent[younger] = elder;
        if (e.value > 0.0) bc.intervals.push_back({0.0, e.value});
    }
    if (n > 0) bc.intervals.push_back({0.0, infinite_death});
    return bc;
}

}  // namespace

std::vector<Barcode> rips_persistence(const DistanceMatrix& dm, int max_dim,
                                      const RipsOptions& options) {
    require(max_dim == 0 || max_dim == 1, ErrorKind::out_of_domain,
            "only dimensions 0 and 1 are supported");
    const std::size_t n = dm.size();
    require(n <= options.max_points, ErrorKind::size_limit,
            "point count " + std::to_string(n) + " exceeds the cap of " +
                std::to_string(options.max_points));

    const std::vector<Edge> edges = sorted_edges(dm);

    // Boundary of each edge in vertex rows.
    std::vector<Column> d1(edges.size());
    for (std::size_t k = 0; k < edges.size(); ++k) d1[k] = {edges[k].i, edges[k].j};
    const std::vector<std::int64_t> edge_low = reduce(d1, n);

    std::vector<Barcode> out;
    if (options.h0 == H0Method::union_find) {
        out.push_back(h0_union_find(n, edges));
    } else {
        Barcode h0{0, {}};
        for (std::size_t k = 0; k < edges.size(); ++k) {
            if (edge_low[k] >= 0 && edges[k].value > 0.0) {
                h0.intervals.push_back({0.0, edges[k].value});
            }
        }
        const auto deaths = static_cast<std::size_t>(
            std::count_if(edge_low.begin(), edge_low.end(), [](std::int64_t l) { return l >= 0; }));
        for (std::size_t v = 0; v < n - deaths; ++v) h0.intervals.push_back({0.0, infinite_death});
        out.push_back(std::move(h0));
    }

    if (max_dim >= 1) {
        std::vector<std::uint32_t> position(n * n, 0);
        for (std::size_t k = 0; k < edges.size(); ++k) {
            position[edges[k].i * n + edges[k].j] = static_cast<std::uint32_t>(k);
        }
        std::vector<Triangle> tris;
        tris.reserve(n * (n - 1) * (n - 2) / 6);
        for (std::uint32_t i = 0; i < n; ++i) {
            for (std::uint32_t j = i + 1; j < n; ++j) {
                for (std::uint32_t k = j + 1; k < n; ++k) {
                    std::array<std::uint32_t, 3> e{position[i * n + j], position[i * n + k],
                                                   position[j * n + k]};
                    std::sort(e.begin(), e.end());
                    const std::uint32_t top = e[2];
                    const Edge& longest = edges[top];
                    const std::uint32_t apex = (i != longest.i && i != longest.j) ? i
                                               : (j != longest.i && j != longest.j) ? j
                                                                                    : k;
                    tris.push_back({longest.value, top, apex, e});
                }
            }
        }
        std::sort(tris.begin(), tris.end(), [](const Triangle& a, const Triangle& b) {
            return std::tie(a.value, a.max_edge, a.apex) < std::tie(b.value, b.max_edge, b.apex);
        });
        std::vector<Column> d2(tris.size());
        for (std::size_t t = 0; t < tris.size(); ++t) {
            d2[t].assign(tris[t].edges.begin(), tris[t].edges.end());
        }
        const std::vector<std::int64_t> tri_low = reduce(d2, edges.size());

        Barcode h1{1, {}};
        std::vector<bool> killed(edges.size(), false);
        for (std::size_t t = 0; t < tris.size(); ++t) {
            if (tri_low[t] < 0) continue;
            const auto e = static_cast<std::size_t>(tri_low[t]);
            killed[e] = true;
            if (tris[t].value > edges[e].value) {
                h1.intervals.push_back({edges[e].value, tris[t].value});
            }
        }
        // Positive edges (cycle creators) that no triangle kills.
        for (std::size_t e = 0; e < edges.size(); ++e) {
            if (edge_low[e] < 0 && !killed[e]) {
                h1.intervals.push_back({edges[e].value, infinite_death});
            }
        }
        out.push_back(std::move(h1));
    }

    for (Barcode& bc : out) std::sort(bc.intervals.begin(), bc.intervals.end());
    return out;
}

std::vector<double> uniform_grid(std::size_t n) {
    require(n >= 2, ErrorKind::invalid_size, "grid needs at least 2 samples");
    std::vector<double> g(n);
    for (std::size_t k = 0; k < n; ++k) {
        g[k] = static_cast<double>(k) / static_cast<double>(n - 1);
    }
    return g;
}

std::vector<BettiCurve> betti_curve(std::span<const Barcode> barcodes,
                                    std::span<const double> grid) {
    std::vector<BettiCurve> curves;
    for (const Barcode& bc : barcodes) {
        BettiCurve curve{bc.dimension, {grid.begin(), grid.end()},
                         std::vector<std::size_t>(grid.size(), 0)};
        for (std::size_t g = 0; g < grid.size(); ++g) {
            for (const Interval& iv : bc.intervals) {
                if (iv.birth <= grid[g] && grid[g] < iv.death) ++curve.beta[g];
            }
        }
        curves.push_back(std::move(curve));
    }
    return curves;
}

namespace {

const BettiCurve* find_dim(std::span<const BettiCurve> curves, int dim) {
    for (const BettiCurve& c : curves) {
        if (c.dimension == dim) return &c;
    }
    return nullptr;
}

double trapezoid(const BettiCurve* c) {
    if (c == nullptr) return 0.0;
    double area = 0.0;
    for (std::size_t k = 1; k < c->epsilon.size(); ++k) {
        area += 0.5 * static_cast<double>(c->beta[k] + c->beta[k - 1]) *
                (c->epsilon[k] - c->epsilon[k - 1]);
    }
    return area;
}

}  // namespace

ComplexityReport complexity_verdict(std::span<const BettiCurve> first,
                                    std::span<const BettiCurve> second) {
    const BettiCurve* a0 = find_dim(first, 0);
    const BettiCurve* b0 = find_dim(second, 0);
    require(a0 != nullptr && b0 != nullptr, ErrorKind::shape_mismatch,
            "complexity verdict needs beta_0 curves on both sides");
    auto same_grid = [](const BettiCurve* a, const BettiCurve* b) {
        return a == nullptr || b == nullptr || a->epsilon == b->epsilon;
    };
    const BettiCurve* a1 = find_dim(first, 1);
    const BettiCurve* b1 = find_dim(second, 1);
    require(same_grid(a0, b0) && same_grid(a1, b1) && same_grid(a0, a1),
            ErrorKind::shape_mismatch, "Betti curves are sampled on different grids");

    ComplexityReport r;
    r.beta0_area_first = trapezoid(a0);
    r.beta0_area_second = trapezoid(b0);
    r.h1_persistence_first = trapezoid(a1);
    r.h1_persistence_second = trapezoid(b1);
    if (r.beta0_area_first < r.beta0_area_second &&
        r.h1_persistence_first <= r.h1_persistence_second) {
        r.verdict = Verdict::first_simpler;
    } else if (r.beta0_area_second < r.beta0_area_first &&
               r.h1_persistence_second <= r.h1_persistence_first) {
        r.verdict = Verdict::second_simpler;
    }
    return r;
}

std::string verdict_label(Verdict v, const std::string& first_name,
                          const std::string& second_name) {
    switch (v) {
        case Verdict::first_simpler: return first_name + " simpler";
        case Verdict::second_simpler: return second_name + " simpler";
        case Verdict::inconclusive: break;
    }
    return "inconclusive";
}

}  // namespace svct::homology
