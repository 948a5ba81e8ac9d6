#include "alstream/orchestrator.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <exception>
#include <fstream>
#include <iomanip>
#include <latch>
#include <map>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <thread>

#include "alstream/seed.hpp"
#include "alstream/worker_pool.hpp"

namespace alstream {

namespace fs = std::filesystem;
using nlohmann::json;

std::string_view mode_name(WorkflowMode m) noexcept {
    switch (m) {
        case WorkflowMode::Baseline: return "baseline";
        case WorkflowMode::Serial: return "serial";
        case WorkflowMode::Streaming: return "streaming";
    }
    return "unknown";
}

WorkflowMode parse_mode(std::string_view name) {
    if (name == "baseline") return WorkflowMode::Baseline;
    if (name == "serial") return WorkflowMode::Serial;
    if (name == "streaming") return WorkflowMode::Streaming;
    throw std::invalid_argument("unknown workflow mode '" + std::string(name) +
                                "' (expected baseline, serial or streaming)");
}

Prior ALConfig::make_prior(const ParamSpace& space) const {
    if (prior == PriorKind::Uniform) return {space, UniformPrior{}};
    TruncGaussianPrior g;
    for (auto s : kAllClasses)
        for (int d = 0; d < free_dim_count(s); ++d) {
            const Range& r = space.range(s, d);
            g.center[class_index(s)][d] = 0.5 * (r.lo + r.hi);
            g.scale[class_index(s)][d] = prior_scale * r.width();
        }
    return {space, g};
}

void WorkflowConfig::validate() const {
    space.validate();
    sim.validate();
    train.validate();
    if (!(al.tau_multiplier > 0.0)) throw std::invalid_argument("tau_multiplier must be positive");
    if (!(al.prior_scale > 0.0)) throw std::invalid_argument("prior_scale must be positive");
    if (n_phases < 1) throw std::invalid_argument("phases must be >= 1");
    if (mode == WorkflowMode::Streaming && n_phases < 2)
        throw std::invalid_argument("the streaming workflow needs at least two phases");
    if (train_per_class < 1) throw std::invalid_argument("train_per_class must be >= 1");
    for (double r : {val_ratio, test_ratio, study_ratio, stream_ratio})
        if (!(r > 0.0)) throw std::invalid_argument("size ratios must be positive");
    if (train_pool_size < 1) throw std::invalid_argument("train pool size must be >= 1");
}

namespace {

std::size_t scaled(std::size_t base, double ratio) {
    return std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(ratio * static_cast<double>(base))));
}

}  // namespace

PhasePlan PhasePlan::from(const WorkflowConfig& cfg) {
    cfg.validate();
    PhasePlan p;
    p.mode = cfg.mode;
    p.n_phases = cfg.mode == WorkflowMode::Baseline ? 1 : cfg.n_phases;
    p.train0 = kNumClasses * cfg.train_per_class;
    p.val = cfg.val_size ? cfg.val_size : scaled(p.train0, cfg.val_ratio);
    p.test = cfg.test_size ? cfg.test_size : scaled(p.train0, cfg.test_ratio);
    p.study = cfg.mode == WorkflowMode::Baseline
                  ? 0
                  : (cfg.study_size ? cfg.study_size : scaled(p.train0, cfg.study_ratio));

    p.al_draw.assign(p.n_phases, 0);
    p.main_shard.assign(p.n_phases, 0);
    p.side_shard.assign(p.n_phases, 0);
    p.main_shard[0] = p.train0;
    const std::size_t half = scaled(p.train0, cfg.stream_ratio);
    for (std::size_t k = 1; k < p.n_phases; ++k) {
        const bool last = k + 1 == p.n_phases;
        if (cfg.mode == WorkflowMode::Streaming && !last) {
            p.al_draw[k] = 2 * half;
            p.main_shard[k] = half;
            p.side_shard[k] = half;
        } else {
            p.al_draw[k] = p.train0;
            p.main_shard[k] = p.train0;
        }
    }
    return p;
}

std::size_t PhasePlan::train_size(std::size_t phase) const {
    std::size_t n = 0;
    for (std::size_t k = 0; k <= phase && k < n_phases; ++k) {
        n += main_shard[k];
        // S_k' finishes alongside T_k, so T_k only sees earlier side shards.
        if (k < phase) n += side_shard[k];
    }
    return n;
}

std::size_t PhasePlan::total_generated() const {
    return std::accumulate(main_shard.begin(), main_shard.end(), std::size_t{0}) +
           std::accumulate(side_shard.begin(), side_shard.end(), std::size_t{0});
}

EventLog::EventLog() : origin_(std::chrono::steady_clock::now()) {}

double EventLog::now_ms() const {
    return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - origin_).count();
}

void EventLog::append(TaskRecord record) {
    std::lock_guard lock(mutex_);
    records_.push_back(std::move(record));
}

std::vector<TaskRecord> EventLog::records() const {
    std::lock_guard lock(mutex_);
    return records_;
}

const TaskRecord* RunReport::find_task(std::string_view name) const {
    for (const auto& t : tasks)
        if (t.name == name) return &t;
    return nullptr;
}

std::uint64_t dataset_hash(const Dataset& d) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    auto mix = [&h](const void* data, std::size_t bytes) {
        const auto* p = static_cast<const unsigned char*>(data);
        for (std::size_t i = 0; i < bytes; ++i) {
            h ^= p[i];
            h *= 0x100000001b3ULL;
        }
    };
    mix(d.inputs.data(), sizeof(double) * static_cast<std::size_t>(d.inputs.size()));
    mix(d.labels.data(), sizeof(int) * d.labels.size());
    mix(d.targets.data(), sizeof(double) * static_cast<std::size_t>(d.targets.size()));
    return h;
}

namespace {

std::string task_name(char kind, std::size_t phase, bool side = false) {
    return std::string(1, kind) + std::to_string(phase) + (side ? "'" : "");
}

std::string al_name(std::size_t phase) { return "AL" + std::to_string(phase); }
std::string pg_name(std::size_t phase) { return "PG" + std::to_string(phase); }

constexpr const char* kSimPool = "sim";
constexpr const char* kTrainPool = "train";

// State shared by the workflows.
class Runner {
public:
    explicit Runner(const WorkflowConfig& cfg) : cfg_(cfg), plan_(PhasePlan::from(cfg)) {
        if (!cfg_.output_dir.empty()) fs::create_directories(cfg_.output_dir);
        report_.mode = cfg.mode;
        report_.seed = cfg.seed;
        report_.n_phases = plan_.n_phases;
        report_.val_size = plan_.val;
        report_.test_size = plan_.test;
        report_.study_size = plan_.study;
        model_ = ModelState::initialized(
            {input_dim(), cfg.train.hidden1, cfg.train.hidden2}, derive_seed(cfg.seed, "model"));
    }

    const PhasePlan& plan() const { return plan_; }
    EventLog& log() { return log_; }

    // Phase-0 bulk data: uniform train/val/test, each with its own seed
    // streams so they do not depend on the other set sizes.
    void simulate_bulk(std::stop_token stop = {}) {
        const auto train_params =
            sample_uniform(cfg_.space, {cfg_.train_per_class, cfg_.train_per_class, cfg_.train_per_class},
                           derive_seed(cfg_.seed, "params-train0"));
        const auto val_params = sample_uniform(cfg_.space, split_evenly(plan_.val), derive_seed(cfg_.seed, "params-val"));
        const auto test_params = sample_uniform(cfg_.space, split_evenly(plan_.test), derive_seed(cfg_.seed, "params-test"));
        train_union_ = simulate(train_params, derive_seed(cfg_.seed, "sim-train0"), stop);
        val_ = simulate(val_params, derive_seed(cfg_.seed, "sim-val"), stop);
        test_ = simulate(test_params, derive_seed(cfg_.seed, "sim-test"), stop);
        val_hash_ = dataset_hash(val_);
        test_hash_ = dataset_hash(test_);
    }

    void simulate_study(std::stop_token stop = {}) {
        study_ = build_study_set(cfg_.space, cfg_.sim, plan_.study, cfg_.train.input_bins,
                                 derive_seed(cfg_.seed, "sim-study"), stop);
        study_hash_ = study_fingerprint();
    }

    ParamBatch active_learning(std::size_t phase) {
        if (!study_) throw std::logic_error("active learning requested before the study set exists");
        auto weights = compute_weights(model_, *study_, cfg_.sim.pool_size);
        const auto density = make_density(*study_, std::move(weights), cfg_.al.make_prior(cfg_.space),
                                          cfg_.al.tau_multiplier);
        auto batch = sample(density, plan_.al_draw[phase], derive_seed(cfg_.seed, "al", phase));
        if (!cfg_.output_dir.empty() && cfg_.save_checkpoints) {
            write_weight_diagnostics(cfg_.output_dir / ("al_weights_phase" + std::to_string(phase) + ".csv"), density);
            write_param_batch(cfg_.output_dir / ("al_batch_phase" + std::to_string(phase) + ".csv"), batch);
        }
        return batch;
    }

    Dataset simulate_shard(const ParamBatch& params, std::size_t phase, bool side, std::stop_token stop = {}) {
        return simulate(params, derive_seed(cfg_.seed, side ? "sim-side" : "sim-main", phase), stop);
    }

    void add_training_data(const Dataset& shard) { train_union_.append(shard); }

    void train_phase(std::size_t phase, std::stop_token stop = {}) {
        const int epochs = cfg_.train.epochs_for_phase(phase, train_union_.size());
        auto result = train(model_, train_union_, val_, cfg_.train, epochs,
                            derive_seed(cfg_.seed, "train", phase), stop);
        model_ = std::move(result.best);
        const auto test = evaluate(model_, test_, cfg_.train_pool_size);

        verify_frozen(phase);
        PhaseMetrics m;
        m.phase = phase;
        m.train_size = train_union_.size();
        m.epochs = epochs;
        m.best_epoch = result.best_epoch;
        m.class_loss = test.class_loss;
        m.mse = test.mse;
        m.val_hash = val_hash_;
        m.test_hash = test_hash_;
        m.study_hash = study_ ? study_hash_ : 0;
        {
            std::lock_guard lock(metrics_mutex_);
            report_.phases.push_back(m);
        }
        if (!cfg_.output_dir.empty() && cfg_.save_checkpoints) {
            save_model(cfg_.output_dir / ("model_phase" + std::to_string(phase) + ".bin"), model_);
            write_history_csv(cfg_.output_dir / ("history_phase" + std::to_string(phase) + ".csv"), result.history);
        }
    }

    // T_k on the calling thread, S_k' on its own thread. Either failing
    // cancels the other; the first genuine error is rethrown after both join.
    void parallel_group(std::size_t phase, const std::function<void(std::stop_token)>& train_task,
                        const std::function<void(std::stop_token)>& sim_task) {
        log_.timed(pg_name(phase), "train+sim", [&] {
            std::stop_source cancel;
            std::exception_ptr train_error, sim_error;
            std::latch side_started(1);
            {
                std::jthread side([&] {
                    try {
                        log_.timed(task_name('S', phase, true), kSimPool, [&] {
                            side_started.count_down();
                            sim_task(cancel.get_token());
                        });
                    } catch (...) {
                        sim_error = std::current_exception();
                        cancel.request_stop();
                    }
                });
                // On a single core the side thread may otherwise not get
                // scheduled before training ends.
                side_started.wait();
                try {
                    log_.timed(task_name('T', phase), kTrainPool, [&] { train_task(cancel.get_token()); });
                } catch (...) {
                    train_error = std::current_exception();
                    cancel.request_stop();
                }
            }
            rethrow_primary(train_error, sim_error);
        });
    }

    RunReport finish() {
        report_.tasks = log_.records();
        std::stable_sort(report_.tasks.begin(), report_.tasks.end(),
                         [](const TaskRecord& a, const TaskRecord& b) { return a.start_ms < b.start_ms; });
        std::sort(report_.phases.begin(), report_.phases.end(),
                  [](const PhaseMetrics& a, const PhaseMetrics& b) { return a.phase < b.phase; });
        report_.total_ms = 0.0;
        for (const auto& t : report_.tasks) report_.total_ms = std::max(report_.total_ms, t.end_ms);
        if (!cfg_.output_dir.empty())
            write_report(cfg_.output_dir / "report.json", cfg_.output_dir / "tasks.csv", report_);
        return report_;
    }

private:
    std::size_t input_dim() const {
        return cfg_.train.input_bins ? cfg_.train.input_bins : cfg_.sim.grid.n_bins;
    }

    Dataset simulate(const ParamBatch& params, std::uint64_t seed, std::stop_token stop) {
        auto batch = simulate_batch(params, cfg_.space, cfg_.sim, seed, stop);
        return make_dataset(batch.samples, cfg_.space, cfg_.train.input_bins);
    }

    std::uint64_t study_fingerprint() const {
        Dataset view;
        view.inputs = study_->inputs;
        return dataset_hash(view);
    }

    void verify_frozen(std::size_t phase) const {
        if (dataset_hash(val_) != val_hash_ || dataset_hash(test_) != test_hash_ ||
            (study_ && study_fingerprint() != study_hash_))
            throw std::logic_error("validation, test or study data changed during phase " + std::to_string(phase));
    }

    static void rethrow_primary(std::exception_ptr a, std::exception_ptr b) {
        auto is_cancel = [](const std::exception_ptr& e) {
            try {
                std::rethrow_exception(e);
            } catch (const Cancelled&) {
                return true;
            } catch (...) {
                return false;
            }
        };
        if (a && !is_cancel(a)) std::rethrow_exception(a);
        if (b && !is_cancel(b)) std::rethrow_exception(b);
        if (a) std::rethrow_exception(a);
        if (b) std::rethrow_exception(b);
    }

    const WorkflowConfig& cfg_;
    PhasePlan plan_;
    EventLog log_;
    RunReport report_;
    std::mutex metrics_mutex_;

    ModelState model_;
    Dataset train_union_;
    Dataset val_;
    Dataset test_;
    std::optional<StudySet> study_;
    std::uint64_t val_hash_ = 0;
    std::uint64_t test_hash_ = 0;
    std::uint64_t study_hash_ = 0;
};

WorkflowConfig with_mode(WorkflowConfig cfg, WorkflowMode mode) {
    cfg.mode = mode;
    return cfg;
}

}  // namespace

RunReport run_baseline(const WorkflowConfig& cfg_in) {
    const auto cfg = with_mode(cfg_in, WorkflowMode::Baseline);
    Runner run(cfg);
    run.log().timed("S0", kSimPool, [&] { run.simulate_bulk(); });
    run.log().timed("T0", kTrainPool, [&] { run.train_phase(0); });
    return run.finish();
}

RunReport run_serial(const WorkflowConfig& cfg_in) {
    const auto cfg = with_mode(cfg_in, WorkflowMode::Serial);
    Runner run(cfg);
    auto& log = run.log();
    log.timed("S0", kSimPool, [&] {
        run.simulate_bulk();
        run.simulate_study();
    });
    log.timed("T0", kTrainPool, [&] { run.train_phase(0); });
    for (std::size_t k = 1; k < run.plan().n_phases; ++k) {
        const auto params = log.timed(al_name(k), kSimPool, [&] { return run.active_learning(k); });
        log.timed(task_name('S', k), kSimPool, [&] { run.add_training_data(run.simulate_shard(params, k, false)); });
        log.timed(task_name('T', k), kTrainPool, [&] { run.train_phase(k); });
    }
    return run.finish();
}

RunReport run_streaming(const WorkflowConfig& cfg_in) {
    const auto cfg = with_mode(cfg_in, WorkflowMode::Streaming);
    Runner run(cfg);
    auto& log = run.log();
    const auto& plan = run.plan();

    log.timed("S0", kSimPool, [&] { run.simulate_bulk(); });
    run.parallel_group(
        0, [&](std::stop_token stop) { run.train_phase(0, stop); },
        [&](std::stop_token stop) { run.simulate_study(stop); });

    for (std::size_t k = 1; k < plan.n_phases; ++k) {
        const auto params = log.timed(al_name(k), kSimPool, [&] { return run.active_learning(k); });
        const bool last = k + 1 == plan.n_phases;
        if (last) {
            log.timed(task_name('S', k), kSimPool, [&] { run.add_training_data(run.simulate_shard(params, k, false)); });
            log.timed(task_name('T', k), kTrainPool, [&] { run.train_phase(k); });
            break;
        }
        const auto half = static_cast<std::ptrdiff_t>(plan.main_shard[k]);
        const ParamBatch first(params.begin(), params.begin() + half);
        const ParamBatch second(params.begin() + half, params.end());
        log.timed(task_name('S', k), kSimPool, [&] { run.add_training_data(run.simulate_shard(first, k, false)); });

        Dataset side;
        run.parallel_group(
            k, [&](std::stop_token stop) { run.train_phase(k, stop); },
            [&](std::stop_token stop) { side = run.simulate_shard(second, k, true, stop); });
        run.add_training_data(side);
    }
    return run.finish();
}

RunReport run_workflow(const WorkflowConfig& cfg) {
    switch (cfg.mode) {
        case WorkflowMode::Baseline: return run_baseline(cfg);
        case WorkflowMode::Serial: return run_serial(cfg);
        case WorkflowMode::Streaming: return run_streaming(cfg);
    }
    throw std::invalid_argument("unknown workflow mode");
}

namespace {

std::vector<std::string> expected_tasks(WorkflowMode mode, std::size_t n_phases) {
    std::vector<std::string> names{"S0", "T0"};
    if (mode == WorkflowMode::Baseline) return names;
    if (mode == WorkflowMode::Streaming) {
        names.push_back("S0'");
        names.push_back("PG0");
    }
    for (std::size_t k = 1; k < n_phases; ++k) {
        names.push_back(al_name(k));
        names.push_back(task_name('S', k));
        names.push_back(task_name('T', k));
        if (mode == WorkflowMode::Streaming && k + 1 < n_phases) {
            names.push_back(task_name('S', k, true));
            names.push_back(pg_name(k));
        }
    }
    return names;
}

}  // namespace

std::vector<std::string> check_ordering(const RunReport& report) {
    std::vector<std::string> errors;
    const auto expected = expected_tasks(report.mode, report.n_phases);

    std::map<std::string, int> seen;
    for (const auto& t : report.tasks) {
        ++seen[t.name];
        if (!(t.end_ms >= t.start_ms)) errors.push_back(t.name + " ends before it starts");
    }
    for (const auto& name : expected)
        if (seen[name] != 1)
            errors.push_back(name + " recorded " + std::to_string(seen[name]) + " times (expected once)");
    for (const auto& [name, count] : seen)
        if (std::find(expected.begin(), expected.end(), name) == expected.end())
            errors.push_back("unexpected task " + name);
    if (!errors.empty()) return errors;

    auto task = [&](const std::string& name) -> const TaskRecord& { return *report.find_task(name); };
    auto before = [&](const std::string& a, const std::string& b) {
        if (task(a).end_ms > task(b).start_ms) errors.push_back(a + " must end before " + b + " starts");
    };
    const bool streaming = report.mode == WorkflowMode::Streaming;

    before("S0", "T0");
    if (streaming) before("S0", "S0'");
    for (std::size_t k = 1; k < report.n_phases; ++k) {
        const auto prev_train = task_name('T', k - 1);
        const auto al = al_name(k), sim = task_name('S', k), trn = task_name('T', k);
        before(prev_train, al);
        if (streaming && k == 1) before("PG0", al);
        if (streaming && k >= 2) before(pg_name(k - 1), al);
        before(al, sim);
        before(sim, trn);
    }
    if (streaming) {
        for (std::size_t k = 0; k + 1 < report.n_phases; ++k) {
            const auto& t = task(task_name('T', k));
            const auto& s = task(task_name('S', k, true));
            const auto& pg = task(pg_name(k));
            if (t.duration_ms() > 0 && s.duration_ms() > 0 &&
                !(std::max(t.start_ms, s.start_ms) < std::min(t.end_ms, s.end_ms)))
                errors.push_back(t.name + " and " + s.name + " do not overlap");
            for (const auto* member : {&t, &s})
                if (member->start_ms < pg.start_ms || member->end_ms > pg.end_ms)
                    errors.push_back(member->name + " lies outside " + pg.name);
        }
    }
    return errors;
}

json to_json(const RunReport& r) {
    json tasks = json::array();
    for (const auto& t : r.tasks)
        tasks.push_back({{"name", t.name}, {"start_ms", t.start_ms}, {"end_ms", t.end_ms}, {"pool", t.pool}});
    json phases = json::array();
    for (const auto& p : r.phases)
        phases.push_back({{"phase", p.phase},
                          {"train_size", p.train_size},
                          {"epochs", p.epochs},
                          {"best_epoch", p.best_epoch},
                          {"class_loss", p.class_loss},
                          {"mse", p.mse},
                          {"val_hash", p.val_hash},
                          {"test_hash", p.test_hash},
                          {"study_hash", p.study_hash}});
    double sim_ms = 0, train_ms = 0, al_ms = 0;
    for (const auto& t : r.tasks) {
        if (t.name.starts_with("PG")) continue;
        if (t.name.starts_with("AL")) al_ms += t.duration_ms();
        else if (t.name.starts_with("S")) sim_ms += t.duration_ms();
        else if (t.name.starts_with("T")) train_ms += t.duration_ms();
    }
    return {{"mode", mode_name(r.mode)},
            {"seed", r.seed},
            {"n_phases", r.n_phases},
            {"datasets", {{"val_size", r.val_size}, {"test_size", r.test_size}, {"study_size", r.study_size}}},
            {"tasks", tasks},
            {"phases", phases},
            {"totals",
             {{"wall_ms", r.total_ms},
              {"sim_ms", sim_ms},
              {"train_ms", train_ms},
              {"al_ms", al_ms},
              {"final_train_size", r.phases.empty() ? 0 : r.phases.back().train_size}}}};
}

RunReport report_from_json(const json& j) {
    try {
        RunReport r;
        r.mode = parse_mode(j.at("mode").get<std::string>());
        r.seed = j.at("seed").get<std::uint64_t>();
        r.n_phases = j.at("n_phases").get<std::size_t>();
        const auto& ds = j.at("datasets");
        r.val_size = ds.at("val_size").get<std::size_t>();
        r.test_size = ds.at("test_size").get<std::size_t>();
        r.study_size = ds.at("study_size").get<std::size_t>();
        for (const auto& t : j.at("tasks"))
            r.tasks.push_back({t.at("name").get<std::string>(), t.at("start_ms").get<double>(),
                               t.at("end_ms").get<double>(), t.at("pool").get<std::string>()});
        for (const auto& p : j.at("phases")) {
            PhaseMetrics m;
            m.phase = p.at("phase").get<std::size_t>();
            m.train_size = p.at("train_size").get<std::size_t>();
            m.epochs = p.at("epochs").get<int>();
            m.best_epoch = p.at("best_epoch").get<int>();
            m.class_loss = p.at("class_loss").get<double>();
            m.mse = p.at("mse").get<double>();
            m.val_hash = p.at("val_hash").get<std::uint64_t>();
            m.test_hash = p.at("test_hash").get<std::uint64_t>();
            m.study_hash = p.at("study_hash").get<std::uint64_t>();
            r.phases.push_back(m);
        }
        r.total_ms = j.at("totals").at("wall_ms").get<double>();
        return r;
    } catch (const json::exception& e) {
        throw std::runtime_error(std::string("report does not match the schema: ") + e.what());
    }
}

std::string metrics_section(const RunReport& r) {
    json j = to_json(r);
    j.erase("tasks");
    j.erase("totals");
    return j.dump();
}

void write_report(const fs::path& json_path, const fs::path& csv_path, const RunReport& r) {
    {
        std::ofstream out(json_path, std::ios::trunc);
        if (!out) throw std::runtime_error("cannot open " + json_path.string() + " for writing");
        out << to_json(r).dump(2) << '\n';
    }
    std::ofstream csv(csv_path, std::ios::trunc);
    if (!csv) throw std::runtime_error("cannot open " + csv_path.string() + " for writing");
    csv << std::fixed << std::setprecision(3);
    csv << "name,start_ms,end_ms,duration_ms,pool\n";
    for (const auto& t : r.tasks)
        csv << t.name << ',' << t.start_ms << ',' << t.end_ms << ',' << t.duration_ms() << ',' << t.pool << '\n';
}

RunReport read_report(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open report " + path.string());
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw std::runtime_error("malformed report " + path.string() + ": " + e.what());
    }
    return report_from_json(j);
}

ComparisonReport compare_runs(const std::vector<RunReport>& reports) {
    if (reports.size() < 2) throw std::invalid_argument("comparison needs at least two reports");
    const auto& ref = reports.front();
    for (const auto& r : reports)
        if (r.n_phases != ref.n_phases || r.val_size != ref.val_size || r.test_size != ref.test_size ||
            r.phases.size() != ref.phases.size())
            throw std::invalid_argument("reports differ in phase count or validation/test size");

    ComparisonReport c;
    for (const auto& r : reports) {
        c.labels.push_back(std::string(mode_name(r.mode)) + "#" + std::to_string(r.seed));
        c.totals_ms.push_back(r.total_ms);
    }
    c.speedup = c.totals_ms.front() / c.totals_ms.back();

    // Canonical order, covering every mode present.
    std::vector<std::string> order = expected_tasks(WorkflowMode::Streaming, ref.n_phases);
    const auto serial_order = expected_tasks(WorkflowMode::Serial, ref.n_phases);
    for (const auto& name : serial_order)
        if (std::find(order.begin(), order.end(), name) == order.end()) order.push_back(name);
    auto rank = [&](const std::string& name) {
        // S_k, T_k, S_k', PG_k, then AL_{k+1}.
        const std::size_t phase = std::stoul(name.substr(name[0] == 'A' || name[0] == 'P' ? 2 : 1));
        int slot = 0;
        if (name.starts_with("AL")) slot = 0;
        else if (name.starts_with("PG")) slot = 4;
        else if (name.back() == '\'') slot = 3;
        else if (name[0] == 'S') slot = 1;
        else slot = 2;
        return phase * 8 + static_cast<std::size_t>(slot);
    };
    std::stable_sort(order.begin(), order.end(),
                     [&](const std::string& a, const std::string& b) { return rank(a) < rank(b); });

    for (const auto& name : order) {
        TaskRow row{name, {}};
        bool any = false;
        for (const auto& r : reports) {
            const auto* t = r.find_task(name);
            row.duration_ms.push_back(t ? std::optional<double>(t->duration_ms()) : std::nullopt);
            any = any || t;
        }
        if (any) c.tasks.push_back(std::move(row));
    }

    for (std::size_t p = 0; p < ref.phases.size(); ++p) {
        PhaseDelta d;
        d.phase = ref.phases[p].phase;
        for (const auto& r : reports) {
            d.class_loss.push_back(r.phases[p].class_loss);
            d.mse.push_back(r.phases[p].mse);
        }
        d.class_loss_delta = d.class_loss.back() - d.class_loss.front();
        d.mse_delta = d.mse.back() - d.mse.front();
        c.phases.push_back(std::move(d));
    }
    return c;
}

std::string ComparisonReport::render() const {
    std::ostringstream out;
    out << std::left << std::setw(8) << "Task";
    for (const auto& l : labels) out << std::right << std::setw(20) << (l + " (ms)");
    out << '\n';
    out << std::fixed << std::setprecision(1);
    for (const auto& row : tasks) {
        out << std::left << std::setw(8) << row.name;
        for (const auto& d : row.duration_ms) {
            if (d) out << std::right << std::setw(20) << *d;
            else out << std::right << std::setw(20) << "-";
        }
        out << '\n';
    }
    out << std::left << std::setw(8) << "Total";
    for (double t : totals_ms) out << std::right << std::setw(20) << t;
    out << "\nSpeed up: " << std::setprecision(2) << speedup << "\n\n";

    out << std::left << std::setw(8) << "Phase";
    for (const auto& l : labels) out << std::right << std::setw(16) << (l + " cls") << std::setw(16) << (l + " mse");
    out << '\n' << std::scientific << std::setprecision(3);
    for (const auto& p : phases) {
        out << std::left << std::setw(8) << p.phase;
        for (std::size_t i = 0; i < p.mse.size(); ++i)
            out << std::right << std::setw(16) << p.class_loss[i] << std::setw(16) << p.mse[i];
        out << '\n';
    }
    return out.str();
}

json ComparisonReport::to_json() const {
    json tasks_json = json::array();
    for (const auto& row : tasks) {
        json durations = json::array();
        for (const auto& d : row.duration_ms) durations.push_back(d ? json(*d) : json(nullptr));
        tasks_json.push_back({{"name", row.name}, {"duration_ms", durations}});
    }
    json phases_json = json::array();
    for (const auto& p : phases)
        phases_json.push_back({{"phase", p.phase},
                               {"class_loss", p.class_loss},
                               {"mse", p.mse},
                               {"class_loss_delta", p.class_loss_delta},
                               {"mse_delta", p.mse_delta}});
    return {{"labels", labels}, {"tasks", tasks_json}, {"phases", phases_json},
            {"totals_ms", totals_ms}, {"speedup", speedup}};
}

namespace {

// Welford accumulation: identical inputs give their exact value and zero spread.
struct RunningStats {
    std::size_t n = 0;
    double mean = 0.0;
    double m2 = 0.0;

    void add(double x) {
        ++n;
        const double delta = x - mean;
        mean += delta / static_cast<double>(n);
        m2 += delta * (x - mean);
    }
    double stddev() const { return n > 1 ? std::sqrt(m2 / static_cast<double>(n - 1)) : 0.0; }
    json to_json() const { return {{"mean", mean}, {"std", stddev()}, {"n", n}}; }
};

}  // namespace

json aggregate_reports(const std::vector<RunReport>& reports) {
    if (reports.empty()) throw std::invalid_argument("nothing to aggregate");
    std::map<std::size_t, std::pair<RunningStats, RunningStats>> phases;
    std::map<std::string, RunningStats> tasks;
    RunningStats total;
    json seeds = json::array();
    for (const auto& r : reports) {
        seeds.push_back(r.seed);
        total.add(r.total_ms);
        for (const auto& p : r.phases) {
            phases[p.phase].first.add(p.class_loss);
            phases[p.phase].second.add(p.mse);
        }
        for (const auto& t : r.tasks) tasks[t.name].add(t.duration_ms());
    }
    json phases_json = json::array();
    for (const auto& [phase, stats] : phases)
        phases_json.push_back({{"phase", phase}, {"class_loss", stats.first.to_json()}, {"mse", stats.second.to_json()}});
    json tasks_json = json::object();
    for (const auto& [name, stats] : tasks) tasks_json[name] = stats.to_json();
    return {{"mode", mode_name(reports.front().mode)},
            {"seeds", seeds},
            {"phases", phases_json},
            {"tasks", tasks_json},
            {"total_ms", total.to_json()}};
}

double calibrate_artificial_cost(const WorkflowConfig& cfg_in, double target_ratio) {
    if (!(target_ratio > 0.0)) throw std::invalid_argument("target ratio must be positive");
    auto cfg = with_mode(cfg_in, WorkflowMode::Serial);
    if (cfg.n_phases < 2) cfg.n_phases = 2;
    cfg.sim.artificial_cost_ms = 0.0;
    const auto plan = PhasePlan::from(cfg);

    using clock = std::chrono::steady_clock;
    auto ms_since = [](clock::time_point t0) {
        return std::chrono::duration<double, std::milli>(clock::now() - t0).count();
    };

    // Real simulation cost per sample on the sim pool.
    constexpr std::size_t kProbe = 192;
    const auto params = sample_uniform(cfg.space, split_evenly(kProbe), derive_seed(cfg.seed, "calibrate"));
    auto t0 = clock::now();
    const auto sim = simulate_batch(params, cfg.space, cfg.sim, 1);
    const double sim_per_sample = ms_since(t0) / kProbe;
    const Dataset probe = make_dataset(sim.samples, cfg.space, cfg.train.input_bins);

    // Training and evaluation cost per sample; one warm-up pass first.
    const auto model = ModelState::initialized({probe.input_dim(), cfg.train.hidden1, cfg.train.hidden2}, 1);
    std::vector<std::size_t> idx(std::min(cfg.train.batch_size, probe.size()));
    std::iota(idx.begin(), idx.end(), 0);
    const Dataset batch = probe.gather(idx);
    ModelState scratch = model;
    AdamOptimizer adam(scratch, cfg.train.adam);
    adam.step(scratch, loss_and_grad(scratch, batch).grad);
    constexpr int kSteps = 8;
    t0 = clock::now();
    for (int i = 0; i < kSteps; ++i) adam.step(scratch, loss_and_grad(scratch, batch).grad);
    const double train_per_sample = ms_since(t0) / (kSteps * static_cast<double>(batch.size()));
    t0 = clock::now();
    (void)evaluate(model, probe, cfg.train_pool_size);
    const double eval_per_sample = ms_since(t0) / static_cast<double>(probe.size());

    const std::size_t n1 = plan.train_size(1);
    const int epochs1 = cfg.train.epochs_for_phase(1, n1);
    const double t1_ms = epochs1 * (static_cast<double>(n1) * train_per_sample +
                                    static_cast<double>(plan.val) * eval_per_sample);
    const double shard = static_cast<double>(plan.main_shard[1]);
    const double cost = (target_ratio * t1_ms - shard * sim_per_sample) *
                        static_cast<double>(cfg.sim.pool_size) / shard;
    return std::max(0.0, cost);
}

}  // namespace alstream
