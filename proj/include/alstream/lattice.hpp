#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace alstream {

enum class SymmetryClass : int { Cubic = 0, Trigonal = 1, Tetragonal = 2 };

inline constexpr int kNumClasses = 3;
inline constexpr int kMaxFreeDims = 2;
inline constexpr std::array<SymmetryClass, kNumClasses> kAllClasses{
    SymmetryClass::Cubic, SymmetryClass::Trigonal, SymmetryClass::Tetragonal};

constexpr int class_index(SymmetryClass s) noexcept { return static_cast<int>(s); }
SymmetryClass class_from_index(int index);
std::string_view class_name(SymmetryClass s) noexcept;

// Cubic: a. Trigonal: a, alpha. Tetragonal: a, c.
constexpr int free_dim_count(SymmetryClass s) noexcept {
    return s == SymmetryClass::Cubic ? 1 : 2;
}

// Unit cell restricted to the three supported symmetry classes.
// b is always equal to a; beta and gamma always equal alpha. Angles in degrees.
struct CellParams {
    SymmetryClass symmetry = SymmetryClass::Cubic;
    double a = 1.0;
    double c = 1.0;
    double alpha = 90.0;

    static CellParams cubic(double a);
    static CellParams trigonal(double a, double alpha);
    static CellParams tetragonal(double a, double c);
    static CellParams from_free(SymmetryClass s, std::span<const double> free);

    // Throws std::invalid_argument when a field is non-finite, out of its
    // physical range, or a constrained field differs from its implied value.
    void validate() const;

    std::array<double, kMaxFreeDims> free_values() const noexcept;

    friend bool operator==(const CellParams&, const CellParams&) = default;
};

using ParamBatch = std::vector<CellParams>;
using ClassCounts = std::array<std::size_t, kNumClasses>;

struct Range {
    double lo = 0.0;
    double hi = 1.0;

    bool contains(double x) const noexcept { return x >= lo && x < hi; }
    double width() const noexcept { return hi - lo; }

    friend bool operator==(const Range&, const Range&) = default;
};

// Per-class half-open boxes for the free parameters.
struct ParamSpace {
    Range cubic_a{3.5, 4.5};
    Range trigonal_a{3.8, 4.2};
    Range trigonal_alpha{60.0, 120.0};
    Range tetragonal_a{3.8, 4.2};
    Range tetragonal_c{3.8, 4.2};

    // "E1" or "E2"; desk variants share the ranges of their parent preset.
    static ParamSpace preset(std::string_view name);

    const Range& range(SymmetryClass s, int dim) const;
    bool contains(const CellParams& cell) const noexcept;
    void validate() const;

    // Bounds used to min-max normalize the (a, c, alpha) regression targets.
    // Each is the hull of every value the dimension takes across classes,
    // including the implied c = a and alpha = 90.
    Range target_range(int dim) const;

    friend bool operator==(const ParamSpace&, const ParamSpace&) = default;
};

struct Miller {
    int h = 0;
    int k = 0;
    int l = 0;
};

// Symmetric reciprocal metric tensor G* = G^-1, stored as its upper triangle
// (xx, yy, zz, xy, xz, yz).
struct ReciprocalMetric {
    std::array<double, 6> g{};

    static ReciprocalMetric of(const CellParams& cell);
    double inverse_d_squared(Miller hkl) const noexcept;
};

// Interplanar spacing from the reciprocal metric tensor of (a, a, c, alpha,
// alpha, alpha). Throws std::invalid_argument for hkl = (0,0,0).
double d_spacing(const CellParams& cell, Miller hkl);

// Independent uniform draws over each class's box, class-major order.
ParamBatch sample_uniform(const ParamSpace& space, const ClassCounts& counts, std::uint64_t seed);

using GridCounts = std::array<std::array<std::size_t, kMaxFreeDims>, kNumClasses>;
using GridSpacing = std::array<std::array<double, kMaxFreeDims>, kNumClasses>;

struct SweepGrid {
    ParamBatch params;
    GridCounts counts{};
    GridSpacing spacing{};
};

// Cell-centred Cartesian grid per class, concatenated class-major. A class
// whose first count is zero is omitted.
SweepGrid sweep_grid(const ParamSpace& space, const GridCounts& counts);

// Splits a total study size equally across classes. Two-dimensional classes
// get the point counts n1 <= n2 <= 2 n1 whose product is closest to the class
// share, preferring the squarest grid on ties.
GridCounts study_grid_counts(std::size_t total);

// Equal per-class split of a total, remainder going to the earliest classes.
ClassCounts split_evenly(std::size_t total);

}  // namespace alstream
