#pragma once

#include <chrono>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "alstream/alpolicy.hpp"
#include "alstream/lattice.hpp"
#include "alstream/nnet.hpp"
#include "alstream/simulator.hpp"

namespace alstream {

enum class WorkflowMode { Baseline, Serial, Streaming };

std::string_view mode_name(WorkflowMode m) noexcept;
WorkflowMode parse_mode(std::string_view name);

enum class PriorKind { Uniform, TruncGaussian };

struct ALConfig {
    double tau_multiplier = 1.0;
    PriorKind prior = PriorKind::Uniform;
    // Truncated-Gaussian prior: centred on each range, std = fraction * width.
    double prior_scale = 0.5;

    Prior make_prior(const ParamSpace& space) const;
};

struct WorkflowConfig {
    ParamSpace space;
    SimConfig sim;
    TrainConfig train;
    ALConfig al;

    WorkflowMode mode = WorkflowMode::Serial;
    std::size_t n_phases = 4;
    std::size_t train_per_class = 4500;  // |D_T0| = 3 * train_per_class
    double val_ratio = 0.5;              // relative to |D_T0|
    double test_ratio = 0.5;
    double study_ratio = 1.0;
    double stream_ratio = 0.6;  // streaming intermediate shards, relative to |D_T0|
    // Explicit sizes override the ratios when nonzero.
    std::size_t val_size = 0;
    std::size_t test_size = 0;
    std::size_t study_size = 0;
    std::size_t train_pool_size = 1;
    std::uint64_t seed = 0;

    std::filesystem::path output_dir;  // empty: keep everything in memory
    bool save_checkpoints = true;

    void validate() const;
};

// Sizes of every task in a run, derived from a config.
struct PhasePlan {
    WorkflowMode mode = WorkflowMode::Serial;
    std::size_t n_phases = 1;
    std::size_t train0 = 0;
    std::size_t val = 0;
    std::size_t test = 0;
    std::size_t study = 0;
    std::vector<std::size_t> al_draw;     // samples drawn by AL_k (0 for phase 0)
    std::vector<std::size_t> main_shard;  // simulated by S_k
    std::vector<std::size_t> side_shard;  // simulated by S_k' in PG_k (0 if none)

    static PhasePlan from(const WorkflowConfig& cfg);
    // Training-set size seen by T_k.
    std::size_t train_size(std::size_t phase) const;
    std::size_t total_generated() const;
};

struct TaskRecord {
    std::string name;
    double start_ms = 0.0;
    double end_ms = 0.0;
    std::string pool;

    double duration_ms() const noexcept { return end_ms - start_ms; }
};

// Append-only, thread-safe task log with timestamps relative to construction.
class EventLog {
public:
    EventLog();

    double now_ms() const;
    void append(TaskRecord record);
    std::vector<TaskRecord> records() const;

    // Runs fn and appends its record, also when fn throws.
    template <typename Fn>
    decltype(auto) timed(std::string name, std::string pool, Fn&& fn) {
        const double start = now_ms();
        struct Guard {
            EventLog& log;
            std::string name, pool;
            double start;
            ~Guard() { log.append({std::move(name), start, log.now_ms(), std::move(pool)}); }
        } guard{*this, std::move(name), std::move(pool), start};
        return std::forward<Fn>(fn)();
    }

private:
    std::chrono::steady_clock::time_point origin_;
    mutable std::mutex mutex_;
    std::vector<TaskRecord> records_;
};

struct PhaseMetrics {
    std::size_t phase = 0;
    std::size_t train_size = 0;
    int epochs = 0;
    int best_epoch = 0;
    double class_loss = 0.0;  // test set
    double mse = 0.0;         // test set
    std::uint64_t val_hash = 0;
    std::uint64_t test_hash = 0;
    std::uint64_t study_hash = 0;  // 0 when no study set exists yet
};

struct RunReport {
    WorkflowMode mode = WorkflowMode::Serial;
    std::uint64_t seed = 0;
    std::size_t n_phases = 0;
    std::size_t val_size = 0;
    std::size_t test_size = 0;
    std::size_t study_size = 0;
    std::vector<TaskRecord> tasks;
    std::vector<PhaseMetrics> phases;
    double total_ms = 0.0;

    const TaskRecord* find_task(std::string_view name) const;
    const PhaseMetrics& final_phase() const { return phases.back(); }
};

// 64-bit FNV-1a over a dataset's inputs, labels and targets.
std::uint64_t dataset_hash(const Dataset& d);

RunReport run_baseline(const WorkflowConfig& cfg);
RunReport run_serial(const WorkflowConfig& cfg);
RunReport run_streaming(const WorkflowConfig& cfg);
RunReport run_workflow(const WorkflowConfig& cfg);  // dispatch on cfg.mode

// Checks ordering constraints recorded in the log; returns the violations.
std::vector<std::string> check_ordering(const RunReport& report);

nlohmann::json to_json(const RunReport& report);
RunReport report_from_json(const nlohmann::json& j);
// Everything except timestamps, serialized deterministically.
std::string metrics_section(const RunReport& report);
void write_report(const std::filesystem::path& json_path, const std::filesystem::path& csv_path,
                  const RunReport& report);
RunReport read_report(const std::filesystem::path& path);

struct TaskRow {
    std::string name;
    std::vector<std::optional<double>> duration_ms;  // one per report
};

struct PhaseDelta {
    std::size_t phase = 0;
    std::vector<double> class_loss;  // one per report
    std::vector<double> mse;
    double class_loss_delta = 0.0;  // last report minus first
    double mse_delta = 0.0;
};

struct ComparisonReport {
    std::vector<std::string> labels;
    std::vector<TaskRow> tasks;  // canonical order S0, T0, S0', PG0, AL1, ...
    std::vector<PhaseDelta> phases;
    std::vector<double> totals_ms;
    double speedup = 1.0;  // first total / last total

    std::string render() const;
    nlohmann::json to_json() const;
};

// Throws std::invalid_argument for fewer than two reports or mismatched
// phase counts / validation / test sizes.
ComparisonReport compare_runs(const std::vector<RunReport>& reports);

// mean and sample std per phase metric and total time over seeds.
nlohmann::json aggregate_reports(const std::vector<RunReport>& reports);

// Per-sample artificial cost (ms) that makes the simulated S1 / T1 duration
// ratio of a serial run equal `target_ratio`, from a short timing probe of
// training and simulation throughput on this host.
double calibrate_artificial_cost(const WorkflowConfig& cfg, double target_ratio);

// Serial S1 / T1 duration ratio that desk timing runs are calibrated to
// (99.1 s of simulation against 119.8 s of training per phase).
inline constexpr double kReferenceSimTrainRatio = 99090.0 / 119806.0;

}  // namespace alstream
