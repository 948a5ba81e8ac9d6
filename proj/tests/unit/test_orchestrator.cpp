#include <gtest/gtest.h>

#include <chrono>
#include <filesystem>

#include <unistd.h>

#include "alstream/orchestrator.hpp"
#include "alstream/worker_pool.hpp"

using namespace alstream;
namespace fs = std::filesystem;

namespace {

WorkflowConfig tiny(WorkflowMode mode, std::uint64_t seed = 1) {
    WorkflowConfig cfg;
    cfg.mode = mode;
    cfg.seed = seed;
    cfg.train_per_class = 20;
    cfg.train.input_bins = 64;
    cfg.train.hidden1 = 16;
    cfg.train.hidden2 = 8;
    cfg.train.batch_size = 16;
    cfg.train.epochs = {3, 2, 2, 2};
    return cfg;
}

PhasePlan plan_for(const char* preset_space, std::size_t per_class, WorkflowMode mode) {
    WorkflowConfig cfg;
    cfg.space = ParamSpace::preset(preset_space);
    cfg.train_per_class = per_class;
    cfg.mode = mode;
    return PhasePlan::from(cfg);
}

TaskRecord rec(std::string name, double s, double e) { return {std::move(name), s, e, "x"}; }

}  // namespace

TEST(PhasePlan, SerialE1Sizes) {
    const auto p = plan_for("E1", 4500, WorkflowMode::Serial);
    EXPECT_EQ(p.train0, 13500u);
    EXPECT_EQ(p.val, 6750u);
    EXPECT_EQ(p.test, 6750u);
    EXPECT_EQ(p.study, 13500u);
    for (std::size_t k = 1; k < 4; ++k) {
        EXPECT_EQ(p.al_draw[k], 13500u);
        EXPECT_EQ(p.main_shard[k], 13500u);
        EXPECT_EQ(p.side_shard[k], 0u);
    }
    // 54000 : 6750 : 6750 = 8 : 1 : 1
    EXPECT_EQ(p.train_size(3), 54000u);
    EXPECT_EQ(p.train_size(3), 8 * p.val);
}

TEST(PhasePlan, StreamingE1Sizes) {
    const auto p = plan_for("E1", 4500, WorkflowMode::Streaming);
    for (std::size_t k : {1u, 2u}) {
        EXPECT_EQ(p.al_draw[k], 16200u);
        EXPECT_EQ(p.main_shard[k], 8100u);
        EXPECT_EQ(p.side_shard[k], 8100u);
    }
    EXPECT_EQ(p.main_shard[3], 13500u);
    EXPECT_EQ(p.side_shard[3], 0u);
    EXPECT_EQ(p.total_generated(), 59400u);
    EXPECT_EQ(p.train_size(1), 13500u + 8100u);
    EXPECT_EQ(p.train_size(2), 13500u + 3 * 8100u);
    EXPECT_EQ(p.train_size(3), 59400u);
}

TEST(PhasePlan, StreamingE2Sizes) {
    const auto p = plan_for("E2", 72000, WorkflowMode::Streaming);
    EXPECT_EQ(p.val, 108000u);
    EXPECT_EQ(p.study, 216000u);
    EXPECT_EQ(p.main_shard[1], 129600u);
    EXPECT_EQ(p.main_shard[3], 216000u);
}

TEST(PhasePlan, BaselineHasOnePhaseAndNoStudy) {
    const auto p = plan_for("E1", 4500, WorkflowMode::Baseline);
    EXPECT_EQ(p.n_phases, 1u);
    EXPECT_EQ(p.study, 0u);
    EXPECT_EQ(p.total_generated(), 13500u);
}

TEST(PhasePlan, InvalidConfigsAreRejected) {
    auto cfg = tiny(WorkflowMode::Streaming);
    cfg.n_phases = 1;
    EXPECT_THROW(PhasePlan::from(cfg), std::invalid_argument);
    cfg = tiny(WorkflowMode::Serial);
    cfg.n_phases = 0;
    EXPECT_THROW(PhasePlan::from(cfg), std::invalid_argument);
    cfg = tiny(WorkflowMode::Serial);
    cfg.val_ratio = 0.0;
    EXPECT_THROW(PhasePlan::from(cfg), std::invalid_argument);
}

TEST(Workflow, BaselineRecordsTwoTasks) {
    const auto r = run_baseline(tiny(WorkflowMode::Baseline));
    ASSERT_EQ(r.tasks.size(), 2u);
    EXPECT_EQ(r.tasks[0].name, "S0");
    EXPECT_EQ(r.tasks[1].name, "T0");
    ASSERT_EQ(r.phases.size(), 1u);
    EXPECT_EQ(r.phases[0].train_size, 60u);
    EXPECT_TRUE(check_ordering(r).empty());
}

TEST(Workflow, SingleSerialPhaseEqualsBaseline) {
    const auto base = run_baseline(tiny(WorkflowMode::Baseline, 4));
    auto cfg = tiny(WorkflowMode::Serial, 4);
    cfg.n_phases = 1;
    const auto serial = run_serial(cfg);
    ASSERT_EQ(serial.phases.size(), 1u);
    EXPECT_EQ(serial.phases[0].class_loss, base.phases[0].class_loss);
    EXPECT_EQ(serial.phases[0].mse, base.phases[0].mse);
    EXPECT_EQ(serial.phases[0].val_hash, base.phases[0].val_hash);
    EXPECT_NE(serial.phases[0].study_hash, 0u);
}

TEST(Workflow, SerialOrderingAndGrowth) {
    const auto r = run_serial(tiny(WorkflowMode::Serial));
    const auto errors = check_ordering(r);
    EXPECT_TRUE(errors.empty()) << errors.front();
    EXPECT_EQ(r.tasks.size(), 2u + 3 * 3);
    ASSERT_EQ(r.phases.size(), 4u);
    for (std::size_t k = 1; k < 4; ++k) {
        EXPECT_GT(r.phases[k].train_size, r.phases[k - 1].train_size);
        EXPECT_EQ(r.phases[k].val_hash, r.phases[0].val_hash);
        EXPECT_EQ(r.phases[k].test_hash, r.phases[0].test_hash);
        EXPECT_EQ(r.phases[k].study_hash, r.phases[0].study_hash);
    }
    EXPECT_EQ(r.phases[3].train_size, 240u);
}

TEST(Workflow, StreamingOrderingOverlapAndSharedEvaluationData) {
    auto cfg = tiny(WorkflowMode::Streaming);
    cfg.sim.artificial_cost_ms = 2.0;
    const auto r = run_streaming(cfg);
    const auto errors = check_ordering(r);
    EXPECT_TRUE(errors.empty()) << errors.front();
    for (const char* name : {"S0", "PG0", "T0", "S0'", "AL1", "S1", "PG1", "T1", "S1'", "AL3", "S3", "T3"})
        EXPECT_NE(r.find_task(name), nullptr) << name;
    EXPECT_EQ(r.find_task("PG3"), nullptr);
    // 60 + 4 * 36 + 60
    EXPECT_EQ(r.phases[3].train_size, 264u);
    EXPECT_EQ(r.phases[1].train_size, 96u);

    const auto serial = run_serial(tiny(WorkflowMode::Serial));
    EXPECT_EQ(r.phases[0].val_hash, serial.phases[0].val_hash);
    EXPECT_EQ(r.phases[0].test_hash, serial.phases[0].test_hash);
    // The study set is built alongside T0, so phase 0 reports no study hash.
    EXPECT_EQ(r.phases[0].study_hash, 0u);
    EXPECT_EQ(r.phases[1].study_hash, serial.phases[0].study_hash);
    // Phase 0 trains on identical data from the same initial model.
    EXPECT_EQ(r.phases[0].mse, serial.phases[0].mse);
}

TEST(Workflow, SameSeedGivesIdenticalMetrics) {
    const auto a = run_serial(tiny(WorkflowMode::Serial, 9));
    const auto b = run_serial(tiny(WorkflowMode::Serial, 9));
    EXPECT_EQ(metrics_section(a), metrics_section(b));
    const auto c = run_serial(tiny(WorkflowMode::Serial, 10));
    EXPECT_NE(metrics_section(a), metrics_section(c));
}

TEST(Workflow, ParallelGroupFailureCancelsPartner) {
    auto cfg = tiny(WorkflowMode::Streaming);
    cfg.train_per_class = 5;               // S0: 15 + 8 + 8 samples
    cfg.train.adam.learning_rate = 1e8;    // T0 diverges almost at once
    cfg.sim.artificial_cost_ms = 100.0;    // S0 about 3 s
    cfg.study_size = 60;                   // S0' would add about 6 s
    const auto start = std::chrono::steady_clock::now();
    try {
        run_streaming(cfg);
        FAIL() << "expected the training failure to propagate";
    } catch (const Cancelled&) {
        FAIL() << "the partner's cancellation masked the real error";
    } catch (const std::runtime_error& e) {
        const std::string what = e.what();
        EXPECT_TRUE(what.find("diverged") != std::string::npos || what.find("finite") != std::string::npos) << what;
    }
    EXPECT_LT(std::chrono::steady_clock::now() - start, std::chrono::seconds(8));
}

TEST(Workflow, OutputDirectoryReceivesArtifacts) {
    auto cfg = tiny(WorkflowMode::Serial);
    cfg.n_phases = 2;
    cfg.output_dir = fs::temp_directory_path() / ("alstream_run_" + std::to_string(::getpid()));
    run_serial(cfg);
    for (const char* f : {"report.json", "tasks.csv", "model_phase0.bin", "model_phase1.bin", "history_phase1.csv",
                          "al_weights_phase1.csv", "al_batch_phase1.csv"})
        EXPECT_TRUE(fs::exists(cfg.output_dir / f)) << f;
    const auto back = read_report(cfg.output_dir / "report.json");
    EXPECT_EQ(back.phases.size(), 2u);
    fs::remove_all(cfg.output_dir);
}

TEST(Ordering, DetectsViolations) {
    RunReport r;
    r.mode = WorkflowMode::Serial;
    r.n_phases = 2;
    r.tasks = {rec("S0", 0, 1), rec("T0", 1, 5), rec("AL1", 4, 6), rec("S1", 6, 7), rec("T1", 7, 9)};
    auto errors = check_ordering(r);
    ASSERT_EQ(errors.size(), 1u);
    EXPECT_NE(errors[0].find("T0"), std::string::npos);

    r.tasks = {rec("S0", 0, 1), rec("T0", 1, 5), rec("S1", 6, 7), rec("T1", 7, 9)};
    EXPECT_FALSE(check_ordering(r).empty());
    r.tasks.push_back(rec("AL1", 5, 6));
    r.tasks.push_back(rec("AL1", 5, 6));
    EXPECT_FALSE(check_ordering(r).empty());
}

TEST(Ordering, StreamingRequiresOverlap) {
    RunReport r;
    r.mode = WorkflowMode::Streaming;
    r.n_phases = 2;
    r.tasks = {rec("S0", 0, 1),  rec("PG0", 1, 5), rec("T0", 1, 5), rec("S0'", 1, 3),
               rec("AL1", 5, 6), rec("S1", 6, 7),  rec("T1", 7, 9)};
    EXPECT_TRUE(check_ordering(r).empty());
    r.tasks[3] = rec("S0'", 5, 5.5);  // disjoint from T0 and outside PG0
    EXPECT_FALSE(check_ordering(r).empty());
}

TEST(Report, JsonRoundTrip) {
    const auto r = run_serial(tiny(WorkflowMode::Serial));
    const auto back = report_from_json(to_json(r));
    EXPECT_EQ(metrics_section(back), metrics_section(r));
    ASSERT_EQ(back.tasks.size(), r.tasks.size());
    EXPECT_EQ(back.tasks[3].name, r.tasks[3].name);
    EXPECT_EQ(back.total_ms, r.total_ms);
    EXPECT_THROW(report_from_json(nlohmann::json{{"mode", "serial"}}), std::runtime_error);
    EXPECT_THROW(read_report("/nonexistent/report.json"), std::runtime_error);
}

TEST(Compare, IdenticalReportsGiveUnitSpeedup) {
    const auto r = run_serial(tiny(WorkflowMode::Serial));
    const auto c = compare_runs({r, r});
    EXPECT_EQ(c.speedup, 1.0);
    for (const auto& p : c.phases) {
        EXPECT_EQ(p.mse_delta, 0.0);
        EXPECT_EQ(p.class_loss_delta, 0.0);
    }
    EXPECT_NE(c.render().find("Speed up: 1.00"), std::string::npos);
}

TEST(Compare, SerialAgainstStreamingUsesTableRowOrder) {
    const auto serial = run_serial(tiny(WorkflowMode::Serial));
    const auto streaming = run_streaming(tiny(WorkflowMode::Streaming));
    const auto c = compare_runs({serial, streaming});
    std::vector<std::string> names;
    for (const auto& row : c.tasks) names.push_back(row.name);
    const std::vector<std::string> expected{"S0",  "T0", "S0'", "PG0", "AL1", "S1", "T1", "S1'", "PG1",
                                            "AL2", "S2", "T2",  "S2'", "PG2", "AL3", "S3", "T3"};
    EXPECT_EQ(names, expected);
    EXPECT_FALSE(c.tasks[2].duration_ms[0].has_value());
    EXPECT_TRUE(c.tasks[2].duration_ms[1].has_value());
    EXPECT_DOUBLE_EQ(c.speedup, serial.total_ms / streaming.total_ms);
}

TEST(Compare, ShapeMismatchIsRejected) {
    const auto r = run_serial(tiny(WorkflowMode::Serial));
    auto other = r;
    other.val_size += 1;
    EXPECT_THROW(compare_runs({r, other}), std::invalid_argument);
    EXPECT_THROW(compare_runs({r}), std::invalid_argument);
}

TEST(Aggregate, EqualRunsHaveZeroSpread) {
    const auto r = run_baseline(tiny(WorkflowMode::Baseline));
    const auto agg = aggregate_reports({r, r, r});
    EXPECT_EQ(agg["phases"][0]["mse"]["std"].get<double>(), 0.0);
    EXPECT_EQ(agg["phases"][0]["mse"]["mean"].get<double>(), r.phases[0].mse);
    EXPECT_EQ(agg["phases"][0]["mse"]["n"].get<int>(), 3);
}

TEST(Aggregate, SampleStandardDeviation) {
    RunReport a, b;
    a.mode = b.mode = WorkflowMode::Serial;
    a.phases = {PhaseMetrics{}};
    b.phases = {PhaseMetrics{}};
    a.phases[0].mse = 1.0;
    b.phases[0].mse = 3.0;
    const auto agg = aggregate_reports({a, b});
    EXPECT_DOUBLE_EQ(agg["phases"][0]["mse"]["mean"].get<double>(), 2.0);
    EXPECT_DOUBLE_EQ(agg["phases"][0]["mse"]["std"].get<double>(), std::sqrt(2.0));
}

TEST(EventLogTest, RecordsEvenWhenTheTaskThrows) {
    EventLog log;
    EXPECT_THROW(log.timed("X", "sim", []() -> int { throw std::runtime_error("boom"); }), std::runtime_error);
    EXPECT_EQ(log.timed("Y", "train", [] { return 7; }), 7);
    const auto recs = log.records();
    ASSERT_EQ(recs.size(), 2u);
    EXPECT_EQ(recs[0].name, "X");
    EXPECT_LE(recs[0].start_ms, recs[0].end_ms);
}

TEST(Modes, NamesRoundTrip) {
    for (auto m : {WorkflowMode::Baseline, WorkflowMode::Serial, WorkflowMode::Streaming})
        EXPECT_EQ(parse_mode(mode_name(m)), m);
    EXPECT_THROW(parse_mode("parallel"), std::invalid_argument);
}
