#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "alstream/config.hpp"
#include "alstream/orchestrator.hpp"
#include "alstream/seed.hpp"

namespace fs = std::filesystem;
using namespace alstream;

namespace {

constexpr int kUsageError = 2;
constexpr int kRunError = 1;

struct CommonOptions {
    std::string config;
    std::string preset;
    std::vector<std::string> overrides;  // section.key=value
    std::optional<std::uint64_t> seed;
};

void add_common(CLI::App* cmd, CommonOptions& opt) {
    cmd->add_option("--config", opt.config, "INI config file")->check(CLI::ExistingFile);
    cmd->add_option("--preset", opt.preset, "E1, E2, E1-desk or E2-desk");
    cmd->add_option("--set", opt.overrides, "Override a config key, e.g. --set train.batch_size=128");
    cmd->add_option("--seed", opt.seed, "Base seed");
}

// preset -> config file -> ALSTREAM_* environment -> command-line flags
WorkflowConfig resolve_config(const CommonOptions& opt) {
    std::string preset = opt.preset;
    if (preset.empty() && !opt.config.empty()) preset = file_preset(opt.config).value_or("");
    if (preset.empty()) preset = "E1-desk";
    WorkflowConfig cfg = preset_config(preset);
    if (!opt.config.empty()) apply_config_file(cfg, opt.config);
    apply_env_overrides(cfg);
    for (const auto& item : opt.overrides) {
        const auto eq = item.find('=');
        const auto dot = item.find('.');
        if (eq == std::string::npos || dot == std::string::npos || dot > eq)
            throw ConfigError("--set expects section.key=value, got '" + item + "'");
        set_config_value(cfg, item.substr(0, dot), item.substr(dot + 1, eq - dot - 1), item.substr(eq + 1));
    }
    if (opt.seed) cfg.seed = *opt.seed;
    return cfg;
}

std::vector<SymmetryClass> parse_classes(const std::vector<std::string>& names) {
    std::vector<SymmetryClass> out;
    for (const auto& n : names) {
        bool found = false;
        for (auto s : kAllClasses)
            if (class_name(s) == n) {
                out.push_back(s);
                found = true;
            }
        if (!found) throw CLI::ValidationError("--classes", "unknown symmetry class '" + n + "'");
    }
    if (out.empty()) throw CLI::ValidationError("--classes", "the class mix is empty");
    return out;
}

ClassCounts split_over(std::size_t total, const std::vector<SymmetryClass>& classes) {
    ClassCounts counts{};
    for (std::size_t i = 0; i < classes.size(); ++i)
        counts[class_index(classes[i])] = total / classes.size() + (i < total % classes.size() ? 1 : 0);
    return counts;
}

struct SimulateOptions {
    std::string kind = "train";
    std::optional<std::size_t> count;
    std::vector<std::string> classes{"cubic", "trigonal", "tetragonal"};
    std::string out;
};

int cmd_simulate(const CommonOptions& common, const SimulateOptions& opt) {
    auto cfg = resolve_config(common);
    cfg.mode = WorkflowMode::Serial;
    const auto classes = parse_classes(opt.classes);
    const auto plan = PhasePlan::from(cfg);

    std::vector<SimulatedSample> samples;
    if (opt.kind == "study") {
        if (classes.size() != kNumClasses)
            throw CLI::ValidationError("--classes", "study sweeps always cover all three classes");
        const std::size_t total = opt.count.value_or(plan.study);
        const auto grid = sweep_grid(cfg.space, study_grid_counts(total));
        samples = simulate_batch(grid.params, cfg.space, cfg.sim, derive_seed(cfg.seed, "sim-study")).samples;
    } else {
        std::size_t total = 0;
        if (opt.kind == "train") total = plan.train0;
        else if (opt.kind == "val") total = plan.val;
        else if (opt.kind == "test") total = plan.test;
        else throw CLI::ValidationError("--kind", "expected train, val, test or study");
        total = opt.count.value_or(total);
        if (total == 0) throw CLI::ValidationError("--count", "must be positive");
        const auto params = sample_uniform(cfg.space, split_over(total, classes),
                                           derive_seed(cfg.seed, "params-" + opt.kind));
        samples = simulate_batch(params, cfg.space, cfg.sim, derive_seed(cfg.seed, "sim-" + opt.kind)).samples;
    }
    write_dataset(opt.out, samples, cfg.sim.grid);
    std::cout << "wrote " << samples.size() << " profiles to " << opt.out << '\n';
    return 0;
}

struct RunOptions {
    std::optional<std::string> mode;
    std::optional<std::size_t> phases;
    std::size_t seeds = 1;
    std::string out = "runs";
    bool calibrate = false;
};

int cmd_run(const CommonOptions& common, const RunOptions& opt) {
    auto cfg = resolve_config(common);
    if (opt.mode) cfg.mode = parse_mode(*opt.mode);
    if (opt.phases) cfg.n_phases = *opt.phases;
    if (opt.seeds < 1) throw CLI::ValidationError("--seeds", "must be >= 1");
    cfg.validate();
    if (opt.calibrate) {
        cfg.sim.artificial_cost_ms = calibrate_artificial_cost(cfg, kReferenceSimTrainRatio);
        std::cerr << "calibrated artificial_cost_ms = " << cfg.sim.artificial_cost_ms << '\n';
    }
    fs::create_directories(opt.out);

    std::vector<RunReport> reports;
    std::vector<std::pair<std::uint64_t, std::string>> failures;
    const std::uint64_t base = cfg.seed;
    for (std::size_t i = 0; i < opt.seeds; ++i) {
        auto run_cfg = cfg;
        run_cfg.seed = base + i;
        run_cfg.output_dir = fs::path(opt.out) / (std::string(mode_name(cfg.mode)) + "_seed" + std::to_string(run_cfg.seed));
        std::cerr << "[" << mode_name(cfg.mode) << " seed " << run_cfg.seed << "] running\n";
        try {
            auto report = run_workflow(run_cfg);
            const auto& last = report.final_phase();
            std::cerr << "[" << mode_name(cfg.mode) << " seed " << run_cfg.seed << "] done in "
                      << report.total_ms / 1000.0 << " s, test class_loss " << last.class_loss << ", mse "
                      << last.mse << '\n';
            reports.push_back(std::move(report));
        } catch (const std::exception& e) {
            std::cerr << "[" << mode_name(cfg.mode) << " seed " << run_cfg.seed << "] failed: " << e.what() << '\n';
            failures.emplace_back(run_cfg.seed, e.what());
        }
    }

    nlohmann::json aggregate = reports.empty() ? nlohmann::json::object() : aggregate_reports(reports);
    aggregate["failed"] = nlohmann::json::array();
    for (const auto& [seed, what] : failures) aggregate["failed"].push_back({{"seed", seed}, {"error", what}});
    std::ofstream(fs::path(opt.out) / "aggregate.json") << aggregate.dump(2) << '\n';

    if (!failures.empty()) {
        std::cerr << failures.size() << " of " << opt.seeds << " runs failed, seeds:";
        for (const auto& f : failures) std::cerr << ' ' << f.first;
        std::cerr << '\n';
        return kRunError;
    }
    return 0;
}

int cmd_report(const std::vector<std::string>& paths, const std::string& json_out) {
    std::vector<RunReport> reports;
    for (const auto& p : paths) reports.push_back(read_report(p));
    const auto cmp = compare_runs(reports);
    std::cout << cmp.render();
    if (!json_out.empty()) std::ofstream(json_out) << cmp.to_json().dump(2) << '\n';
    return 0;
}

struct AlSampleOptions {
    std::string model;
    std::size_t count = 1000;
    std::string out = "al_sample";
};

int cmd_al_sample(const CommonOptions& common, const AlSampleOptions& opt) {
    auto cfg = resolve_config(common);
    cfg.mode = WorkflowMode::Serial;
    cfg.validate();
    const auto model = load_model(opt.model);
    const auto plan = PhasePlan::from(cfg);
    const auto study = build_study_set(cfg.space, cfg.sim, plan.study, cfg.train.input_bins,
                                       derive_seed(cfg.seed, "sim-study"));
    auto weights = compute_weights(model, study, cfg.sim.pool_size);
    const auto d = make_density(study, std::move(weights), cfg.al.make_prior(cfg.space), cfg.al.tau_multiplier);
    const auto batch = sample(d, opt.count, derive_seed(cfg.seed, "al-sample"));

    fs::create_directories(opt.out);
    const fs::path dir(opt.out);
    write_weight_diagnostics(dir / "weights.csv", d);
    std::ofstream dens(dir / "density.csv");
    dens.precision(17);
    dens << "class,a,c,alpha,density\n";
    for (const auto& y : d.centers)
        dens << class_name(y.symmetry) << ',' << y.a << ',' << y.c << ',' << y.alpha << ',' << density(y, d) << '\n';
    write_param_batch(dir / "samples.csv", batch);
    std::cout << "wrote weights, density and " << batch.size() << " samples to " << opt.out << '\n';
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Active-learning workflows for diffraction-profile surrogates"};
    app.require_subcommand(1);
    CommonOptions common;

    auto* sim = app.add_subcommand("simulate", "Simulate a uniform or sweep batch into a dataset file");
    add_common(sim, common);
    SimulateOptions sim_opt;
    sim->add_option("--kind", sim_opt.kind, "train, val, test or study")->capture_default_str();
    sim->add_option("--count", sim_opt.count, "Number of samples (defaults to the preset size)");
    sim->add_option("--classes", sim_opt.classes, "Symmetry classes to sample")->delimiter(',')->capture_default_str();
    sim->add_option("--out", sim_opt.out, "Output dataset file")->required();

    auto* run = app.add_subcommand("run", "Run a workflow once per seed");
    add_common(run, common);
    RunOptions run_opt;
    run->add_option("--mode", run_opt.mode, "baseline, serial or streaming");
    run->add_option("--phases", run_opt.phases, "Number of phases");
    run->add_option("--seeds", run_opt.seeds, "Number of consecutive seeds")->capture_default_str();
    run->add_option("--out", run_opt.out, "Output directory")->capture_default_str();
    run->add_flag("--calibrate", run_opt.calibrate,
                  "Set artificial_cost_ms so simulation and training durations keep the reference ratio");

    auto* rep = app.add_subcommand("report", "Compare run reports");
    std::vector<std::string> report_paths;
    std::string report_json;
    rep->add_option("reports", report_paths, "report.json files; the first is the reference")->required();
    rep->add_option("--json", report_json, "Also write the comparison as JSON");

    auto* al = app.add_subcommand("al-sample", "Dump AL weights, density and samples for a checkpoint");
    add_common(al, common);
    AlSampleOptions al_opt;
    al->add_option("--model", al_opt.model, "Model checkpoint")->required()->check(CLI::ExistingFile);
    al->add_option("--count", al_opt.count, "Samples to draw")->capture_default_str();
    al->add_option("--out", al_opt.out, "Output directory")->capture_default_str();

    auto* keys = app.add_subcommand("config", "Print the resolved configuration");
    add_common(keys, common);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e);
    }

    try {
        if (*sim) return cmd_simulate(common, sim_opt);
        if (*run) return cmd_run(common, run_opt);
        if (*rep) return cmd_report(report_paths, report_json);
        if (*al) return cmd_al_sample(common, al_opt);
        if (*keys) {
            std::cout << dump_config(resolve_config(common));
            return 0;
        }
    } catch (const CLI::ValidationError& e) {
        std::cerr << "usage error: " << e.what() << '\n';
        return kUsageError;
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return kUsageError;
    } catch (const std::invalid_argument& e) {
        std::cerr << "invalid argument: " << e.what() << '\n';
        return kUsageError;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kRunError;
    }
    return 0;
}
