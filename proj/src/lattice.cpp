#include "alstream/lattice.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <numbers>
#include <random>
#include <stdexcept>

#include "alstream/seed.hpp"

namespace alstream {

namespace {

constexpr double kDegToRad = std::numbers::pi / 180.0;

// Exact zero for right angles so cubic/tetragonal cells carry no 6e-17 noise.
double cos_deg(double deg) {
    if (deg == 90.0) return 0.0;
    return std::cos(deg * kDegToRad);
}

}  // namespace

SymmetryClass class_from_index(int index) {
    if (index < 0 || index >= kNumClasses)
        throw std::invalid_argument("symmetry class index out of range: " + std::to_string(index));
    return static_cast<SymmetryClass>(index);
}

std::string_view class_name(SymmetryClass s) noexcept {
    switch (s) {
        case SymmetryClass::Cubic: return "cubic";
        case SymmetryClass::Trigonal: return "trigonal";
        case SymmetryClass::Tetragonal: return "tetragonal";
    }
    return "unknown";
}

CellParams CellParams::cubic(double a) { return {SymmetryClass::Cubic, a, a, 90.0}; }

CellParams CellParams::trigonal(double a, double alpha) {
    return {SymmetryClass::Trigonal, a, a, alpha};
}

CellParams CellParams::tetragonal(double a, double c) {
    return {SymmetryClass::Tetragonal, a, c, 90.0};
}

CellParams CellParams::from_free(SymmetryClass s, std::span<const double> free) {
    if (free.size() < static_cast<std::size_t>(free_dim_count(s)))
        throw std::invalid_argument("too few free parameters for " + std::string(class_name(s)));
    switch (s) {
        case SymmetryClass::Cubic: return cubic(free[0]);
        case SymmetryClass::Trigonal: return trigonal(free[0], free[1]);
        case SymmetryClass::Tetragonal: return tetragonal(free[0], free[1]);
    }
    throw std::invalid_argument("unknown symmetry class");
}

void CellParams::validate() const {
    if (!std::isfinite(a) || !std::isfinite(c) || !std::isfinite(alpha))
        throw std::invalid_argument("cell parameters must be finite");
    if (a <= 0.0 || c <= 0.0) throw std::invalid_argument("cell lengths must be positive");
    if (alpha <= 0.0 || alpha >= 180.0)
        throw std::invalid_argument("cell angle must lie in (0, 180) degrees");
    switch (symmetry) {
        case SymmetryClass::Cubic:
            if (c != a || alpha != 90.0)
                throw std::invalid_argument("cubic cell requires c == a and alpha == 90");
            break;
        case SymmetryClass::Trigonal:
            if (c != a) throw std::invalid_argument("trigonal cell requires c == a");
            break;
        case SymmetryClass::Tetragonal:
            if (alpha != 90.0) throw std::invalid_argument("tetragonal cell requires alpha == 90");
            break;
        default: throw std::invalid_argument("unknown symmetry class");
    }
}

std::array<double, kMaxFreeDims> CellParams::free_values() const noexcept {
    switch (symmetry) {
        case SymmetryClass::Cubic: return {a, 0.0};
        case SymmetryClass::Trigonal: return {a, alpha};
        case SymmetryClass::Tetragonal: return {a, c};
    }
    return {a, 0.0};
}

ParamSpace ParamSpace::preset(std::string_view name) {
    if (name == "E1" || name == "E1-desk") return ParamSpace{};
    if (name == "E2" || name == "E2-desk") {
        ParamSpace s;
        s.cubic_a = {2.5, 5.5};
        s.trigonal_a = {3.5, 4.5};
        s.trigonal_alpha = {30.0, 120.0};
        s.tetragonal_a = {3.5, 4.5};
        s.tetragonal_c = {3.5, 4.5};
        return s;
    }
    throw std::invalid_argument("unknown parameter-space preset: " + std::string(name));
}

const Range& ParamSpace::range(SymmetryClass s, int dim) const {
    if (dim < 0 || dim >= free_dim_count(s))
        throw std::out_of_range("free dimension out of range for " + std::string(class_name(s)));
    switch (s) {
        case SymmetryClass::Cubic: return cubic_a;
        case SymmetryClass::Trigonal: return dim == 0 ? trigonal_a : trigonal_alpha;
        case SymmetryClass::Tetragonal: return dim == 0 ? tetragonal_a : tetragonal_c;
    }
    throw std::invalid_argument("unknown symmetry class");
}

bool ParamSpace::contains(const CellParams& cell) const noexcept {
    try {
        cell.validate();
    } catch (const std::invalid_argument&) {
        return false;
    }
    const auto free = cell.free_values();
    for (int d = 0; d < free_dim_count(cell.symmetry); ++d)
        if (!range(cell.symmetry, d).contains(free[d])) return false;
    return true;
}

void ParamSpace::validate() const {
    for (auto s : kAllClasses)
        for (int d = 0; d < free_dim_count(s); ++d) {
            const Range& r = range(s, d);
            if (!std::isfinite(r.lo) || !std::isfinite(r.hi) || !(r.lo < r.hi))
                throw std::invalid_argument("parameter range for " + std::string(class_name(s)) +
                                            " must satisfy lo < hi");
        }
    if (cubic_a.lo <= 0 || trigonal_a.lo <= 0 || tetragonal_a.lo <= 0 || tetragonal_c.lo <= 0)
        throw std::invalid_argument("length ranges must be positive");
    if (trigonal_alpha.lo <= 0 || trigonal_alpha.hi >= 180)
        throw std::invalid_argument("trigonal angle range must lie inside (0, 180)");
}

Range ParamSpace::target_range(int dim) const {
    auto hull = [](std::initializer_list<Range> rs) {
        Range out = *rs.begin();
        for (const Range& r : rs) {
            out.lo = std::min(out.lo, r.lo);
            out.hi = std::max(out.hi, r.hi);
        }
        return out;
    };
    switch (dim) {
        case 0: return hull({cubic_a, trigonal_a, tetragonal_a});
        case 1: return hull({cubic_a, trigonal_a, tetragonal_c});
        case 2: return hull({trigonal_alpha, Range{90.0, 90.0}});
        default: throw std::out_of_range("target dimension must be 0, 1 or 2");
    }
}

ReciprocalMetric ReciprocalMetric::of(const CellParams& cell) {
    const double a = cell.a;
    const double b = cell.a;
    const double c = cell.c;
    const double ca = cos_deg(cell.alpha);  // alpha = beta = gamma
    Eigen::Matrix3d metric;
    metric << a * a, a * b * ca, a * c * ca,
              a * b * ca, b * b, b * c * ca,
              a * c * ca, b * c * ca, c * c;
    const Eigen::Matrix3d inv = metric.inverse();
    if (!inv.allFinite()) throw std::domain_error("degenerate cell metric");
    return {{inv(0, 0), inv(1, 1), inv(2, 2), inv(0, 1), inv(0, 2), inv(1, 2)}};
}

double ReciprocalMetric::inverse_d_squared(Miller hkl) const noexcept {
    const double h = hkl.h, k = hkl.k, l = hkl.l;
    return g[0] * h * h + g[1] * k * k + g[2] * l * l +
           2.0 * (g[3] * h * k + g[4] * h * l + g[5] * k * l);
}

double d_spacing(const CellParams& cell, Miller hkl) {
    if (hkl.h == 0 && hkl.k == 0 && hkl.l == 0)
        throw std::invalid_argument("d_spacing requires a nonzero Miller index");
    const double inv_d2 = ReciprocalMetric::of(cell).inverse_d_squared(hkl);
    if (!(inv_d2 > 0.0)) throw std::domain_error("degenerate cell metric");
    return 1.0 / std::sqrt(inv_d2);
}

ParamBatch sample_uniform(const ParamSpace& space, const ClassCounts& counts, std::uint64_t seed) {
    space.validate();
    ParamBatch out;
    out.reserve(counts[0] + counts[1] + counts[2]);
    for (auto s : kAllClasses) {
        std::mt19937_64 rng(derive_seed(seed, static_cast<std::uint64_t>(class_index(s))));
        const int dims = free_dim_count(s);
        std::array<std::uniform_real_distribution<double>, kMaxFreeDims> dist;
        for (int d = 0; d < dims; ++d) {
            const Range& r = space.range(s, d);
            dist[d] = std::uniform_real_distribution<double>(r.lo, r.hi);
        }
        for (std::size_t i = 0; i < counts[class_index(s)]; ++i) {
            std::array<double, kMaxFreeDims> free{};
            for (int d = 0; d < dims; ++d) free[d] = dist[d](rng);
            out.push_back(CellParams::from_free(s, free));
        }
    }
    return out;
}

SweepGrid sweep_grid(const ParamSpace& space, const GridCounts& counts) {
    space.validate();
    SweepGrid grid;
    grid.counts = counts;
    for (auto s : kAllClasses) {
        const int ci = class_index(s);
        const int dims = free_dim_count(s);
        if (counts[ci][0] == 0) continue;
        for (int d = 0; d < dims; ++d) {
            if (counts[ci][d] == 0)
                throw std::invalid_argument("sweep counts must be >= 1 per free dimension");
            const Range& r = space.range(s, d);
            grid.spacing[ci][d] = r.width() / static_cast<double>(counts[ci][d]);
        }
        auto coord = [&](int d, std::size_t i) {
            const Range& r = space.range(s, d);
            return r.lo + (static_cast<double>(i) + 0.5) * grid.spacing[ci][d];
        };
        if (dims == 1) {
            for (std::size_t i = 0; i < counts[ci][0]; ++i) {
                const double v[] = {coord(0, i)};
                grid.params.push_back(CellParams::from_free(s, v));
            }
        } else {
            for (std::size_t i = 0; i < counts[ci][0]; ++i)
                for (std::size_t j = 0; j < counts[ci][1]; ++j) {
                    const double v[] = {coord(0, i), coord(1, j)};
                    grid.params.push_back(CellParams::from_free(s, v));
                }
        }
    }
    return grid;
}

ClassCounts split_evenly(std::size_t total) {
    ClassCounts out{};
    for (int c = 0; c < kNumClasses; ++c)
        out[c] = total / kNumClasses + (static_cast<std::size_t>(c) < total % kNumClasses ? 1 : 0);
    return out;
}

GridCounts study_grid_counts(std::size_t total) {
    const ClassCounts share = split_evenly(total);
    GridCounts out{};
    for (auto s : kAllClasses) {
        const int ci = class_index(s);
        const std::size_t n = share[ci];
        if (n == 0) continue;
        if (free_dim_count(s) == 1) {
            out[ci] = {n, 0};
        } else {
            // Closest product to n with an aspect ratio of at most 2, then the
            // squarest such pair. 4500 -> 60 x 75.
            std::size_t best1 = 1, best2 = n;
            std::size_t best_gap = n, best_skew = n;
            for (std::size_t n1 = 1; n1 * n1 <= n; ++n1) {
                const std::size_t n2 = (n + n1 / 2) / n1;
                if (n2 > 2 * n1) continue;
                const std::size_t gap = n1 * n2 > n ? n1 * n2 - n : n - n1 * n2;
                const std::size_t skew = n2 - n1;
                if (gap < best_gap || (gap == best_gap && skew < best_skew)) {
                    best1 = n1;
                    best2 = n2;
                    best_gap = gap;
                    best_skew = skew;
                }
            }
            out[ci] = {best1, best2};
        }
    }
    return out;
}

}  // namespace alstream
