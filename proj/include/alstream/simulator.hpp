#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <stop_token>
#include <vector>

#include "alstream/lattice.hpp"

namespace alstream {

// Logarithmic time-of-flight grid: bin i is centred at t0 * exp(i * delta).
struct TofGrid {
    double t0 = 1360.0;      // us
    double delta = 0.0009381;
    std::size_t n_bins = 2807;

    double center(std::size_t i) const noexcept;
    double last() const noexcept { return center(n_bins - 1); }
    // Nearest bin index for a time (may fall outside [0, n_bins)).
    long long nearest_bin(double t) const noexcept;
    void validate() const;

    friend bool operator==(const TofGrid&, const TofGrid&) = default;
};

struct BraggProfile {
    TofGrid grid;
    std::vector<double> intensity;
};

enum class CostMode {
    Sleep,  // the worker is held for the duration without using the CPU
    Spin,   // the worker burns CPU for the duration
};

struct SimConfig {
    TofGrid grid;
    double difc = 5000.0;  // us per angstrom
    double w0 = 2.0;       // us
    double w1 = 0.002;
    int hkl_bound = 6;
    double noise_std = 0.01;
    double artificial_cost_ms = 0.0;
    CostMode cost_mode = CostMode::Sleep;
    std::size_t pool_size = 1;

    double peak_width(double t) const noexcept { return w0 + w1 * t; }
    void validate() const;
};

struct Peak {
    double tof;
    double amplitude;
};

// Distinct reflections inside the grid, sorted by time of flight, with
// coincident reflections merged.
std::vector<Peak> reflection_list(const CellParams& cell, const SimConfig& cfg);

// Throws std::domain_error when the cell lies outside the space and
// std::runtime_error when no reflection falls on the grid.
BraggProfile simulate_profile(const CellParams& cell, const ParamSpace& space,
                              const SimConfig& cfg, std::uint64_t seed);

struct SimulatedSample {
    BraggProfile profile;
    CellParams cell;
};

struct SimBatch {
    std::vector<SimulatedSample> samples;
    double wall_ms = 0.0;
};

// Seed used for element `index` of a batch simulated with `seed`.
std::uint64_t sample_seed(std::uint64_t seed, std::size_t index) noexcept;

// Order-stable parallel simulation over cfg.pool_size workers. Element i is
// identical to simulate_profile(batch[i], ..., sample_seed(seed, i)).
SimBatch simulate_batch(const ParamBatch& batch, const ParamSpace& space, const SimConfig& cfg,
                        std::uint64_t seed, std::stop_token stop = {});

// Occupies the calling thread for the configured per-sample cost.
void artificial_work(double ms, CostMode mode, std::stop_token stop = {});

// Binary dataset: "ALSPROF1", u32 version, f64 t0, f64 delta, u32 n_bins,
// u64 count, then per sample u32 class, f64 a, f64 c, f64 alpha,
// f32 intensity[n_bins]. Little-endian.
void write_dataset(const std::filesystem::path& path, const std::vector<SimulatedSample>& samples,
                   const TofGrid& grid);
std::vector<SimulatedSample> read_dataset(const std::filesystem::path& path);

// CSV "class,a,c,alpha" for parameter batches.
void write_param_batch(const std::filesystem::path& path, const ParamBatch& batch);
ParamBatch read_param_batch(const std::filesystem::path& path);

}  // namespace alstream
