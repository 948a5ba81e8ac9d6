#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <random>
#include <set>

#include "alstream/lattice.hpp"

using namespace alstream;

namespace {

double rel_err(double a, double b) { return std::abs(a - b) / std::max(std::abs(a), std::abs(b)); }

// Closed-form 1/d^2 for a rhombohedral cell (a, alpha).
double rhombohedral_inv_d2(double a, double alpha_deg, int h, int k, int l) {
    const double al = alpha_deg * std::numbers::pi / 180.0;
    const double c = std::cos(al), s = std::sin(al);
    const double num = (h * h + k * k + l * l) * s * s + 2.0 * (h * k + k * l + h * l) * (c * c - c);
    const double den = a * a * (1.0 - 3.0 * c * c + 2.0 * c * c * c);
    return num / den;
}

// 1/d = |h a* + k b* + l c*| with reciprocal vectors from cross products.
double reciprocal_vector_d(double a, double c_len, double alpha_deg, int h, int k, int l) {
    const double al = alpha_deg * std::numbers::pi / 180.0;
    const double ca = std::cos(al), sa = std::sin(al);
    // a along x, b in the xy plane, c completing the cell with alpha = beta = gamma.
    const double v1[3] = {a, 0.0, 0.0};
    const double v2[3] = {a * ca, a * sa, 0.0};
    const double cx = c_len * ca;
    const double cy = c_len * (ca - ca * ca) / sa;
    const double v3[3] = {cx, cy, std::sqrt(c_len * c_len - cx * cx - cy * cy)};
    auto cross = [](const double* u, const double* v, double* out) {
        out[0] = u[1] * v[2] - u[2] * v[1];
        out[1] = u[2] * v[0] - u[0] * v[2];
        out[2] = u[0] * v[1] - u[1] * v[0];
    };
    double c23[3], c31[3], c12[3];
    cross(v2, v3, c23);
    cross(v3, v1, c31);
    cross(v1, v2, c12);
    const double vol = v1[0] * c23[0] + v1[1] * c23[1] + v1[2] * c23[2];
    double g[3];
    for (int i = 0; i < 3; ++i) g[i] = (h * c23[i] + k * c31[i] + l * c12[i]) / vol;
    return 1.0 / std::sqrt(g[0] * g[0] + g[1] * g[1] + g[2] * g[2]);
}

Miller random_hkl(std::mt19937_64& rng) {
    std::uniform_int_distribution<int> idx(-6, 6);
    Miller m;
    do {
        m = {idx(rng), idx(rng), idx(rng)};
    } while (m.h == 0 && m.k == 0 && m.l == 0);
    return m;
}

}  // namespace

TEST(Lattice, CubicMatchesClosedForm) {
    const auto cell = CellParams::cubic(4.0);
    EXPECT_NEAR(d_spacing(cell, {1, 0, 0}), 4.0, 1e-14);
    EXPECT_NEAR(d_spacing(cell, {1, 1, 0}), 4.0 / std::sqrt(2.0), 1e-14);
    EXPECT_NEAR(d_spacing(cell, {1, 1, 1}), 4.0 / std::sqrt(3.0), 1e-14);
    EXPECT_NEAR(d_spacing(cell, {2, -1, 3}), 4.0 / std::sqrt(14.0), 1e-14);
}

TEST(Lattice, DegenerateSubclassesEqualCubic) {
    std::mt19937_64 rng(7);
    std::uniform_real_distribution<double> len(3.5, 4.5);
    for (int i = 0; i < 50; ++i) {
        const double a = len(rng);
        const Miller hkl = random_hkl(rng);
        const double cubic = d_spacing(CellParams::cubic(a), hkl);
        EXPECT_LT(rel_err(d_spacing(CellParams::trigonal(a, 90.0), hkl), cubic), 1e-12);
        EXPECT_LT(rel_err(d_spacing(CellParams::tetragonal(a, a), hkl), cubic), 1e-12);
    }
}

TEST(Lattice, TetragonalMatchesClosedForm) {
    std::mt19937_64 rng(11);
    std::uniform_real_distribution<double> len(3.8, 4.2);
    for (int i = 0; i < 100; ++i) {
        const double a = len(rng), c = len(rng);
        const Miller m = random_hkl(rng);
        const double expected = 1.0 / std::sqrt((m.h * m.h + m.k * m.k) / (a * a) + m.l * m.l / (c * c));
        EXPECT_LT(rel_err(d_spacing(CellParams::tetragonal(a, c), m), expected), 1e-12);
    }
}

TEST(Lattice, TrigonalMatchesRhombohedralFormula) {
    std::mt19937_64 rng(13);
    std::uniform_real_distribution<double> len(3.8, 4.2), ang(30.0, 120.0);
    for (int i = 0; i < 200; ++i) {
        const double a = len(rng), alpha = ang(rng);
        const Miller m = random_hkl(rng);
        const double expected = 1.0 / std::sqrt(rhombohedral_inv_d2(a, alpha, m.h, m.k, m.l));
        EXPECT_LT(rel_err(d_spacing(CellParams::trigonal(a, alpha), m), expected), 1e-10)
            << "a=" << a << " alpha=" << alpha;
    }
}

TEST(Lattice, TrigonalMatchesReciprocalBasis) {
    std::mt19937_64 rng(17);
    std::uniform_real_distribution<double> len(3.5, 4.5), ang(60.0, 119.0);
    for (int i = 0; i < 100; ++i) {
        const double a = len(rng), alpha = ang(rng);
        const Miller m = random_hkl(rng);
        EXPECT_LT(rel_err(d_spacing(CellParams::trigonal(a, alpha), m),
                          reciprocal_vector_d(a, a, alpha, m.h, m.k, m.l)),
                  1e-10);
    }
}

TEST(Lattice, ZeroMillerIndexThrows) {
    EXPECT_THROW(d_spacing(CellParams::cubic(4.0), {0, 0, 0}), std::invalid_argument);
}

TEST(Lattice, ValidateRejectsInconsistentCells) {
    EXPECT_NO_THROW(CellParams::trigonal(4.0, 90.0).validate());
    EXPECT_THROW((CellParams{SymmetryClass::Cubic, 4.0, 4.1, 90.0}).validate(), std::invalid_argument);
    EXPECT_THROW((CellParams{SymmetryClass::Cubic, 4.0, 4.0, 80.0}).validate(), std::invalid_argument);
    EXPECT_THROW((CellParams{SymmetryClass::Tetragonal, 4.0, 4.1, 80.0}).validate(), std::invalid_argument);
    EXPECT_THROW((CellParams{SymmetryClass::Trigonal, 4.0, 4.1, 80.0}).validate(), std::invalid_argument);
    EXPECT_THROW(CellParams::cubic(-1.0).validate(), std::invalid_argument);
    EXPECT_THROW(CellParams::cubic(NAN).validate(), std::invalid_argument);
    EXPECT_THROW(CellParams::trigonal(4.0, 180.0).validate(), std::invalid_argument);
}

TEST(Lattice, PresetsMatchExperimentTable) {
    const auto e1 = ParamSpace::preset("E1");
    EXPECT_EQ(e1.cubic_a.lo, 3.5);
    EXPECT_EQ(e1.cubic_a.hi, 4.5);
    EXPECT_EQ(e1.trigonal_a.lo, 3.8);
    EXPECT_EQ(e1.tetragonal_c.hi, 4.2);
    EXPECT_EQ(e1.trigonal_alpha.lo, 60.0);
    EXPECT_EQ(e1.trigonal_alpha.hi, 120.0);
    const auto e2 = ParamSpace::preset("E2");
    EXPECT_EQ(e2.cubic_a.lo, 2.5);
    EXPECT_EQ(e2.cubic_a.hi, 5.5);
    EXPECT_EQ(e2.tetragonal_a.lo, 3.5);
    EXPECT_EQ(e2.trigonal_alpha.lo, 30.0);
    EXPECT_EQ(ParamSpace::preset("E2-desk"), e2);
    EXPECT_THROW(ParamSpace::preset("E3"), std::invalid_argument);
}

TEST(Lattice, ParamSpaceValidateRejectsEmptyRanges) {
    ParamSpace s;
    s.trigonal_a = {4.0, 4.0};
    EXPECT_THROW(s.validate(), std::invalid_argument);
    ParamSpace t;
    t.trigonal_alpha = {60.0, 200.0};
    EXPECT_THROW(t.validate(), std::invalid_argument);
}

TEST(Lattice, ContainsIsHalfOpen) {
    const ParamSpace s;
    EXPECT_TRUE(s.contains(CellParams::cubic(3.5)));
    EXPECT_FALSE(s.contains(CellParams::cubic(4.5)));
    EXPECT_FALSE(s.contains(CellParams::trigonal(4.0, 120.0)));
    EXPECT_TRUE(s.contains(CellParams::trigonal(4.0, 90.0)));
    EXPECT_FALSE(s.contains(CellParams::tetragonal(4.0, 4.3)));
}

TEST(Lattice, TargetRangesAreHulls) {
    const ParamSpace s;
    EXPECT_EQ(s.target_range(0).lo, 3.5);
    EXPECT_EQ(s.target_range(0).hi, 4.5);
    EXPECT_EQ(s.target_range(1).lo, 3.5);
    EXPECT_EQ(s.target_range(2).lo, 60.0);
    EXPECT_EQ(s.target_range(2).hi, 120.0);
    ParamSpace narrow;
    narrow.trigonal_alpha = {100.0, 110.0};
    EXPECT_EQ(narrow.target_range(2).lo, 90.0);
}

TEST(Lattice, UniformSamplesStayInsideAndAreDeterministic) {
    const ParamSpace s;
    const auto batch = sample_uniform(s, {100, 200, 300}, 42);
    ASSERT_EQ(batch.size(), 600u);
    for (std::size_t i = 0; i < batch.size(); ++i) {
        EXPECT_TRUE(s.contains(batch[i]));
        const auto expected = i < 100 ? SymmetryClass::Cubic : i < 300 ? SymmetryClass::Trigonal : SymmetryClass::Tetragonal;
        EXPECT_EQ(batch[i].symmetry, expected);
    }
    EXPECT_EQ(batch, sample_uniform(s, {100, 200, 300}, 42));
    EXPECT_NE(batch, sample_uniform(s, {100, 200, 300}, 43));
    // Each class draws from its own stream, so other class counts do not shift it.
    const auto other = sample_uniform(s, {5, 200, 300}, 42);
    EXPECT_TRUE(std::equal(other.begin() + 5, other.begin() + 205, batch.begin() + 100));
}

TEST(Lattice, UniformSampleMeanIsCentred) {
    const ParamSpace s;
    const auto batch = sample_uniform(s, {20000, 0, 0}, 3);
    double mean = 0.0;
    for (const auto& c : batch) mean += c.a;
    mean /= static_cast<double>(batch.size());
    // Standard error of a U(3.5, 4.5) mean over 20000 draws is about 0.002.
    EXPECT_NEAR(mean, 4.0, 0.01);
}

TEST(Lattice, SweepGridIsCellCentred) {
    const ParamSpace s;
    const auto grid = sweep_grid(s, {{{4, 0}, {2, 3}, {0, 0}}});
    ASSERT_EQ(grid.params.size(), 4u + 6u);
    EXPECT_DOUBLE_EQ(grid.spacing[0][0], 0.25);
    EXPECT_DOUBLE_EQ(grid.params[0].a, 3.625);
    EXPECT_DOUBLE_EQ(grid.params[3].a, 4.375);
    EXPECT_NEAR(grid.spacing[1][0], 0.2, 1e-12);
    EXPECT_DOUBLE_EQ(grid.spacing[1][1], 20.0);
    EXPECT_EQ(grid.params[4], CellParams::trigonal(3.9, 70.0));
    EXPECT_EQ(grid.params[9].symmetry, SymmetryClass::Trigonal);
    EXPECT_DOUBLE_EQ(grid.params[9].alpha, 110.0);
    std::set<double> as;
    for (const auto& c : grid.params) as.insert(c.a);
    EXPECT_EQ(as.size(), 6u);
}

TEST(Lattice, StudyGridCountsSplitEvenly) {
    const auto counts = study_grid_counts(13500);
    EXPECT_EQ(counts[0][0], 4500u);
    EXPECT_EQ(counts[1][0], 60u);
    EXPECT_EQ(counts[1][1], 75u);
    EXPECT_EQ(counts[2][0] * counts[2][1], 4500u);
    const auto desk = study_grid_counts(1350);
    EXPECT_EQ(desk[1][0] * desk[1][1], 450u);  // 18 x 25
    // 7 is prime; 2 x 4 is the closest grid with aspect ratio <= 2.
    const auto prime = study_grid_counts(21);
    EXPECT_EQ(prime[1][0], 2u);
    EXPECT_EQ(prime[1][1], 4u);
    EXPECT_EQ(split_evenly(10), (ClassCounts{4, 3, 3}));
}
