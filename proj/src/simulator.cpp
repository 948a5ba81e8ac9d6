#include "alstream/simulator.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <random>
#include <sstream>
#include <stdexcept>
#include <string>
#include <thread>

#include "alstream/binary_io.hpp"
#include "alstream/seed.hpp"
#include "alstream/worker_pool.hpp"

namespace alstream {

namespace {

constexpr char kDatasetMagic[9] = "ALSPROF1";
constexpr std::uint32_t kDatasetVersion = 1;

// Peaks closer than this are one reflection.
constexpr double kCoincidentTof = 1e-9;
// Gaussian tails are truncated at this many standard deviations.
constexpr double kPeakSupport = 6.0;

}  // namespace

double TofGrid::center(std::size_t i) const noexcept {
    return t0 * std::exp(static_cast<double>(i) * delta);
}

long long TofGrid::nearest_bin(double t) const noexcept {
    return std::llround(std::log(t / t0) / delta);
}

void TofGrid::validate() const {
    if (!(t0 > 0.0) || !(delta > 0.0) || n_bins < 2 || !std::isfinite(t0) || !std::isfinite(delta))
        throw std::invalid_argument("ToF grid requires t0 > 0, delta > 0 and at least two bins");
}

void SimConfig::validate() const {
    grid.validate();
    if (!(difc > 0.0)) throw std::invalid_argument("difc must be positive");
    if (w0 < 0.0 || w1 < 0.0 || (w0 == 0.0 && w1 == 0.0))
        throw std::invalid_argument("peak width coefficients must be >= 0 and not both zero");
    if (hkl_bound < 1) throw std::invalid_argument("hkl_bound must be >= 1");
    if (!(noise_std >= 0.0)) throw std::invalid_argument("noise_std must be >= 0");
    if (!(artificial_cost_ms >= 0.0)) throw std::invalid_argument("artificial_cost_ms must be >= 0");
    if (pool_size < 1) throw std::invalid_argument("sim pool size must be >= 1");
}

std::vector<Peak> reflection_list(const CellParams& cell, const SimConfig& cfg) {
    const auto metric = ReciprocalMetric::of(cell);
    const double t_lo = cfg.grid.t0;
    const double t_hi = cfg.grid.last();
    const int b = cfg.hkl_bound;

    std::vector<Peak> raw;
    for (int h = -b; h <= b; ++h)
        for (int k = -b; k <= b; ++k)
            for (int l = -b; l <= b; ++l) {
                if (h == 0 && k == 0 && l == 0) continue;
                const double inv_d2 = metric.inverse_d_squared({h, k, l});
                const double d = 1.0 / std::sqrt(inv_d2);
                const double t = cfg.difc * d;
                if (t < t_lo || t > t_hi) continue;
                raw.push_back({t, d * d});
            }
    std::sort(raw.begin(), raw.end(), [](const Peak& x, const Peak& y) { return x.tof < y.tof; });

    std::vector<Peak> merged;
    for (const Peak& p : raw) {
        if (!merged.empty() && p.tof - merged.back().tof <= kCoincidentTof)
            merged.back().amplitude += p.amplitude;
        else
            merged.push_back(p);
    }
    return merged;
}

BraggProfile simulate_profile(const CellParams& cell, const ParamSpace& space,
                              const SimConfig& cfg, std::uint64_t seed) {
    cfg.validate();
    if (!space.contains(cell))
        throw std::domain_error("cell (" + std::string(class_name(cell.symmetry)) + ", a=" +
                                std::to_string(cell.a) + ", c=" + std::to_string(cell.c) +
                                ", alpha=" + std::to_string(cell.alpha) +
                                ") lies outside the parameter space");

    const auto peaks = reflection_list(cell, cfg);
    if (peaks.empty())
        throw std::runtime_error("no reflection falls on the ToF grid; check difc against the grid");

    const TofGrid& grid = cfg.grid;
    BraggProfile profile{grid, std::vector<double>(grid.n_bins, 0.0)};
    auto& I = profile.intensity;
    const auto last = static_cast<long long>(grid.n_bins) - 1;

    for (const Peak& p : peaks) {
        const double sigma = cfg.peak_width(p.tof);
        const double lo_t = std::max(p.tof - kPeakSupport * sigma, grid.t0);
        const long long lo = std::clamp(grid.nearest_bin(lo_t) - 1, 0LL, last);
        const long long hi =
            std::clamp(grid.nearest_bin(p.tof + kPeakSupport * sigma) + 1, 0LL, last);
        for (long long i = lo; i <= hi; ++i) {
            const double z = (grid.center(static_cast<std::size_t>(i)) - p.tof) / sigma;
            I[static_cast<std::size_t>(i)] += p.amplitude * std::exp(-0.5 * z * z);
        }
    }

    const double peak_max = *std::max_element(I.begin(), I.end());
    if (!(peak_max > 0.0)) throw std::runtime_error("simulated profile is identically zero");
    for (double& v : I) v /= peak_max;

    if (cfg.noise_std > 0.0) {
        std::mt19937_64 rng(seed);
        std::normal_distribution<double> noise(0.0, cfg.noise_std);
        for (double& v : I) v = std::max(0.0, v + noise(rng));
    }
    return profile;
}

std::uint64_t sample_seed(std::uint64_t seed, std::size_t index) noexcept {
    return derive_seed(seed, static_cast<std::uint64_t>(index));
}

void artificial_work(double ms, CostMode mode, std::stop_token stop) {
    if (ms <= 0.0) return;
    using clock = std::chrono::steady_clock;
    const auto until = clock::now() + std::chrono::duration_cast<clock::duration>(
                                          std::chrono::duration<double, std::milli>(ms));
    if (mode == CostMode::Sleep) {
        // Sliced so that cancellation is observed promptly.
        while (!stop.stop_requested()) {
            const auto now = clock::now();
            if (now >= until) return;
            std::this_thread::sleep_for(std::min<clock::duration>(until - now, std::chrono::milliseconds(20)));
        }
        return;
    }
    volatile double sink = 0.0;
    while (clock::now() < until && !stop.stop_requested())
        for (int i = 0; i < 1000; ++i) sink = sink + 1e-9 * i;
}

SimBatch simulate_batch(const ParamBatch& batch, const ParamSpace& space, const SimConfig& cfg,
                        std::uint64_t seed, std::stop_token stop) {
    if (batch.empty()) throw std::invalid_argument("simulate_batch requires a nonempty batch");
    cfg.validate();
    const auto start = std::chrono::steady_clock::now();

    SimBatch out;
    out.samples.resize(batch.size());
    parallel_for(
        batch.size(), cfg.pool_size,
        [&](std::size_t i) {
            out.samples[i] = {simulate_profile(batch[i], space, cfg, sample_seed(seed, i)), batch[i]};
            artificial_work(cfg.artificial_cost_ms, cfg.cost_mode, stop);
        },
        stop);

    out.wall_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
    return out;
}

void write_dataset(const std::filesystem::path& path, const std::vector<SimulatedSample>& samples,
                   const TofGrid& grid) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
    binary::write_magic(out, kDatasetMagic);
    binary::write<std::uint32_t>(out, kDatasetVersion);
    binary::write<double>(out, grid.t0);
    binary::write<double>(out, grid.delta);
    binary::write<std::uint32_t>(out, static_cast<std::uint32_t>(grid.n_bins));
    binary::write<std::uint64_t>(out, samples.size());
    for (const auto& s : samples) {
        if (s.profile.intensity.size() != grid.n_bins)
            throw std::invalid_argument("profile length does not match the dataset grid");
        binary::write<std::uint32_t>(out, static_cast<std::uint32_t>(class_index(s.cell.symmetry)));
        binary::write<double>(out, s.cell.a);
        binary::write<double>(out, s.cell.c);
        binary::write<double>(out, s.cell.alpha);
        for (double v : s.profile.intensity) binary::write<float>(out, static_cast<float>(v));
    }
    if (!out) throw std::runtime_error("write failed: " + path.string());
}

std::vector<SimulatedSample> read_dataset(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open " + path.string());
    binary::expect_magic(in, kDatasetMagic, "profile dataset");
    if (const auto v = binary::read<std::uint32_t>(in); v != kDatasetVersion)
        throw std::runtime_error("unsupported dataset version " + std::to_string(v));
    TofGrid grid;
    grid.t0 = binary::read<double>(in);
    grid.delta = binary::read<double>(in);
    grid.n_bins = binary::read<std::uint32_t>(in);
    const auto count = binary::read<std::uint64_t>(in);

    std::vector<SimulatedSample> samples;
    samples.reserve(count);
    for (std::uint64_t n = 0; n < count; ++n) {
        SimulatedSample s;
        s.cell.symmetry = class_from_index(static_cast<int>(binary::read<std::uint32_t>(in)));
        s.cell.a = binary::read<double>(in);
        s.cell.c = binary::read<double>(in);
        s.cell.alpha = binary::read<double>(in);
        s.profile.grid = grid;
        s.profile.intensity.resize(grid.n_bins);
        for (double& v : s.profile.intensity) v = binary::read<float>(in);
        samples.push_back(std::move(s));
    }
    return samples;
}

void write_param_batch(const std::filesystem::path& path, const ParamBatch& batch) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
    out.precision(17);
    out << "class,a,c,alpha\n";
    for (const auto& cell : batch)
        out << class_index(cell.symmetry) << ',' << cell.a << ',' << cell.c << ',' << cell.alpha << '\n';
}

ParamBatch read_param_batch(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open " + path.string());
    std::string line;
    std::getline(in, line);
    if (line != "class,a,c,alpha") throw std::runtime_error("unexpected parameter batch header");
    ParamBatch batch;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::istringstream row(line);
        int cls = 0;
        char sep = 0;
        CellParams cell;
        if (!(row >> cls >> sep >> cell.a >> sep >> cell.c >> sep >> cell.alpha))
            throw std::runtime_error("malformed parameter row: " + line);
        cell.symmetry = class_from_index(cls);
        batch.push_back(cell);
    }
    return batch;
}

}  // namespace alstream
