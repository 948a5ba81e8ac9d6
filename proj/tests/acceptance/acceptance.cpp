// Acceptance run: one PASS/FAIL line per criterion, exit status 1 if any fails.
// Usage: acceptance [report_dir]

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <iostream>
#include <numeric>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <boost/math/distributions/chi_squared.hpp>

#include "alstream/alpolicy.hpp"
#include "alstream/config.hpp"
#include "alstream/lattice.hpp"
#include "alstream/nnet.hpp"
#include "alstream/orchestrator.hpp"
#include "alstream/simulator.hpp"

using namespace alstream;
namespace fs = std::filesystem;

namespace {

struct Outcome {
    bool pass = false;
    std::string detail;
};

std::string fmt(const char* f, auto... args) {
    char buf[512];
    std::snprintf(buf, sizeof buf, f, args...);
    return buf;
}

double median(std::vector<double> v) {
    std::sort(v.begin(), v.end());
    const std::size_t n = v.size();
    return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

// ---- 1 ---------------------------------------------------------------------

Outcome geometry() {
    std::mt19937_64 rng(20240601);
    std::uniform_real_distribution<double> ua(3.5, 4.5);
    std::uniform_int_distribution<int> ui(-6, 6);
    double worst = 0.0;
    for (int n = 0; n < 50; ++n) {
        const double a = ua(rng);
        Miller m;
        do m = {ui(rng), ui(rng), ui(rng)};
        while (m.h == 0 && m.k == 0 && m.l == 0);
        const double closed = a / std::sqrt(double(m.h * m.h + m.k * m.k + m.l * m.l));
        const double cubic = d_spacing(CellParams::cubic(a), m);
        for (double d : {cubic, d_spacing(CellParams::trigonal(a, 90.0), m),
                         d_spacing(CellParams::tetragonal(a, a), m)}) {
            worst = std::max(worst, std::abs(d - cubic) / cubic);
            worst = std::max(worst, std::abs(d - closed) / closed);
        }
    }
    return {worst < 1e-12, fmt("max rel err %.3g over 50 pairs", worst)};
}

// ---- 2 ---------------------------------------------------------------------

Outcome tof_grid() {
    const TofGrid g;
    const double steps = std::log(g.last() / g.t0) / 0.0009381;
    const bool ok = g.n_bins == 2807 && g.t0 == 1360.0 && std::abs(steps - 2806.0) <= 1.0;
    return {ok, fmt("%zu bins, t0 %.1f us, ln(t_last/t0)/delta = %.6f", g.n_bins, g.t0, steps)};
}

// ---- 3 ---------------------------------------------------------------------

Dataset random_batch(std::size_t input, std::size_t n, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::vector<LabeledSample> samples(n);
    for (std::size_t i = 0; i < n; ++i) {
        auto& s = samples[i];
        s.input.resize(input);
        for (double& x : s.input) x = u(rng);
        s.label = static_cast<int>(i % 3);
        s.mask = free_mask(class_from_index(s.label));
        for (int k = 0; k < kTargetDims; ++k) s.target[k] = s.mask[k] * u(rng);
    }
    return Dataset::from_samples(samples);
}

double gradient_error(const ModelState& model, const Dataset& batch) {
    const auto analytic = grad(model, batch);
    ModelState probe = model;
    auto params = probe.tensors();
    auto grads = analytic.tensors();
    constexpr double h = 1e-5;
    double worst = 0.0;
    for (std::size_t t = 0; t < ModelState::kTensorCount; ++t)
        for (Eigen::Index i = 0; i < params[t]->size(); ++i) {
            double& w = params[t]->data()[i];
            const double saved = w;
            w = saved + h;
            const double up = loss(probe, batch).total;
            w = saved - h;
            const double down = loss(probe, batch).total;
            w = saved;
            const double numeric = (up - down) / (2.0 * h);
            const double a = grads[t]->data()[i];
            worst = std::max(worst, std::abs(a - numeric) / std::max({std::abs(a), std::abs(numeric), 1e-6}));
        }
    return worst;
}

Outcome loss_suite() {
    const ModelDims dims{10, 12, 6};
    // Zero model: uniform logits, y_hat = 0, log_var = 0.
    auto zero = ModelState::zeros(dims);
    auto batch = random_batch(dims.input, 12, 3);
    const double ce = loss(zero, batch).class_loss;
    batch.targets.setZero();
    const double reg = loss(zero, batch).reg_loss;

    double worst = 0.0;
    for (std::uint64_t seed = 1; seed <= 3; ++seed) {
        auto model = ModelState::initialized(dims, seed);
        std::mt19937_64 rng(seed + 77);
        std::normal_distribution<double> n(0.0, 0.3);
        for (auto* t : model.tensors())
            for (Eigen::Index i = 0; i < t->size(); ++i) t->data()[i] += n(rng);
        worst = std::max(worst, gradient_error(model, random_batch(dims.input, 9, seed + 100)));
    }
    const bool ok = reg == 0.0 && std::abs(ce - std::log(3.0)) < 1e-12 && worst < 1e-4;
    return {ok, fmt("reg_loss %.3g, class_loss - ln3 = %.3g, max FD rel err %.3g", reg, ce - std::log(3.0), worst)};
}

// ---- 4 ---------------------------------------------------------------------

double normal_cdf(double z) { return 0.5 * std::erfc(-z / std::sqrt(2.0)); }

Outcome sampler() {
    const ParamSpace space;
    const auto grid = sweep_grid(space, {{{20, 0}, {0, 0}, {0, 0}}});
    StudySet study;
    study.params = grid.params;
    study.spacing = grid.spacing;
    const Prior prior{space, UniformPrior{}};
    const double lo = space.cubic_a.lo, hi = space.cubic_a.hi;

    std::mt19937_64 rng(42);
    std::uniform_real_distribution<double> u(0.05, 1.0);
    std::vector<double> w(20);
    for (double& x : w) x = u(rng);
    const double wsum = std::accumulate(w.begin(), w.end(), 0.0);
    for (double& x : w) x /= wsum;

    const auto d = make_density(study, w, prior);
    const double tau = d.tau[0][0];
    constexpr std::size_t n = 100000;
    auto draw = sample(d, n, 7);
    std::vector<double> ys;
    for (const auto& y : draw) ys.push_back(y.a);
    std::sort(ys.begin(), ys.end());

    // CDF of the mixture restricted to [lo, hi) by trapezoidal quadrature.
    constexpr std::size_t q = 200000;
    const double hq = (hi - lo) / q;
    auto pdf = [&](double y) {
        double s = 0.0;
        for (std::size_t k = 0; k < 20; ++k) s += w[k] * std::exp(-0.5 * std::pow((y - study.params[k].a) / tau, 2));
        return s;
    };
    std::vector<double> cdf(q + 1, 0.0);
    double prev = pdf(lo);
    for (std::size_t i = 1; i <= q; ++i) {
        const double cur = pdf(lo + i * hq);
        cdf[i] = cdf[i - 1] + 0.5 * hq * (prev + cur);
        prev = cur;
    }
    for (double& c : cdf) c /= cdf.back();
    auto F = [&](double y) {
        const double pos = (y - lo) / hq;
        const auto i = std::min<std::size_t>(q - 1, static_cast<std::size_t>(pos));
        const double f = pos - static_cast<double>(i);
        return cdf[i] + f * (cdf[i + 1] - cdf[i]);
    };
    double ks = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double f = F(ys[i]);
        ks = std::max({ks, std::abs(f - double(i) / n), std::abs(double(i + 1) / n - f)});
    }

    // One-hot weights.
    std::vector<double> one(20, 0.0);
    one[7] = 1.0;
    const auto hot = sample(make_density(study, one, prior), n, 8);
    std::size_t inside = 0;
    for (const auto& y : hot) inside += std::abs(y.a - study.params[7].a) <= 3.0 * tau;
    const double conc = static_cast<double>(inside) / n;

    // Equal weights: a component's share is proportional to the mass its
    // Gaussian keeps inside [lo, hi).
    const std::vector<double> eq(20, 1.0 / 20);
    const auto comp = sample_with_components(make_density(study, eq, prior), n, 9);
    std::vector<double> counts(20, 0.0), expect(20);
    for (auto k : comp.components) counts[k] += 1.0;
    for (std::size_t k = 0; k < 20; ++k) {
        const double c = study.params[k].a;
        expect[k] = normal_cdf((hi - c) / tau) - normal_cdf((lo - c) / tau);
    }
    const double esum = std::accumulate(expect.begin(), expect.end(), 0.0);
    double chi2 = 0.0;
    for (std::size_t k = 0; k < 20; ++k) {
        const double e = n * expect[k] / esum;
        chi2 += (counts[k] - e) * (counts[k] - e) / e;
    }
    const double p = boost::math::cdf(boost::math::complement(boost::math::chi_squared(19.0), chi2));

    const bool ok = ks < 0.01 && conc >= 0.99 && p > 0.01;
    return {ok, fmt("KS %.4g, concentration %.4f, chi2 %.2f (p = %.3f)", ks, conc, chi2, p)};
}

// ---- workflow runs -----------------------------------------------------------

struct Runs {
    RunReport serial_timed, streaming_timed;
    double cost_ms = 0.0;
    std::vector<RunReport> serial, streaming, baseline;
    RunReport serial_repeat;
};

fs::path g_report_dir;

RunReport run(WorkflowConfig cfg, WorkflowMode mode, std::uint64_t seed, const std::string& tag) {
    cfg.mode = mode;
    cfg.seed = seed;
    const auto t0 = std::chrono::steady_clock::now();
    auto r = run_workflow(cfg);
    const double s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    std::cerr << "  " << tag << " " << mode_name(mode) << " seed " << seed << ": " << fmt("%.1f s", s)
              << ", final mse " << r.final_phase().mse << "\n";
    if (!g_report_dir.empty()) {
        const auto stem = g_report_dir / (tag + "_" + std::string(mode_name(mode)) + "_seed" + std::to_string(seed));
        write_report(stem.string() + ".json", stem.string() + ".csv", r);
    }
    return r;
}

Outcome ordering(Runs& runs) {
    auto cfg = preset_config("E1-desk");
    runs.cost_ms = calibrate_artificial_cost(cfg, kReferenceSimTrainRatio);
    cfg.sim.artificial_cost_ms = runs.cost_ms;
    std::cerr << fmt("  calibrated artificial cost %.3f ms/sample\n", runs.cost_ms);
    runs.serial_timed = run(cfg, WorkflowMode::Serial, 1, "timed");
    runs.streaming_timed = run(cfg, WorkflowMode::Streaming, 1, "timed");

    auto v = check_ordering(runs.serial_timed);
    const auto vs = check_ordering(runs.streaming_timed);
    v.insert(v.end(), vs.begin(), vs.end());
    std::size_t overlaps = 0;
    for (std::size_t k = 0; k + 1 < runs.streaming_timed.n_phases; ++k) {
        const auto* t = runs.streaming_timed.find_task("T" + std::to_string(k));
        const auto* s = runs.streaming_timed.find_task("S" + std::to_string(k) + "'");
        if (t && s && std::max(t->start_ms, s->start_ms) < std::min(t->end_ms, s->end_ms)) ++overlaps;
        else v.push_back(fmt("T%zu and S%zu' do not overlap", k, k));
    }
    std::string detail = fmt("%zu + %zu tasks, %zu overlapping PG pairs, %zu violations",
                             runs.serial_timed.tasks.size(), runs.streaming_timed.tasks.size(), overlaps, v.size());
    for (const auto& s : v) detail += "; " + s;
    return {v.empty(), detail};
}

Outcome data_efficiency(Runs& runs) {
    const auto cfg = preset_config("E1-desk");
    std::vector<double> al, base;
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
        runs.serial.push_back(run(cfg, WorkflowMode::Serial, seed, "al"));
        al.push_back(runs.serial.back().final_phase().mse);
    }
    const std::size_t al_total = runs.serial.front().final_phase().train_size;
    const auto plan = PhasePlan::from(cfg);
    auto bcfg = cfg;
    bcfg.train_per_class = 2 * al_total / kNumClasses;
    bcfg.val_size = plan.val;
    bcfg.test_size = plan.test;
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
        runs.baseline.push_back(run(bcfg, WorkflowMode::Baseline, seed, "bulk"));
        base.push_back(runs.baseline.back().final_phase().mse);
    }
    const double m_al = median(al), m_base = median(base);
    return {m_al <= m_base, fmt("median test MSE: serial AL %.4g (%zu samples), baseline %.4g (%zu samples)", m_al,
                                al_total, m_base, runs.baseline.front().final_phase().train_size)};
}

Outcome speedup(const Runs& runs) {
    const double s = runs.serial_timed.total_ms, t = runs.streaming_timed.total_ms;
    const auto* s1 = runs.serial_timed.find_task("S1");
    const auto* t1 = runs.serial_timed.find_task("T1");
    const double ratio = s1 && t1 ? s1->duration_ms() / t1->duration_ms() : 0.0;
    return {t <= 0.90 * s, fmt("serial %.1f s, streaming %.1f s, speedup %.3f (S1/T1 = %.3f, cost %.3f ms)", s / 1000,
                               t / 1000, s / t, ratio, runs.cost_ms)};
}

Outcome parity(Runs& runs) {
    const auto cfg = preset_config("E1-desk");
    std::vector<double> serial, streaming;
    for (const auto& r : runs.serial) serial.push_back(r.final_phase().mse);
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
        runs.streaming.push_back(run(cfg, WorkflowMode::Streaming, seed, "parity"));
        streaming.push_back(runs.streaming.back().final_phase().mse);
    }
    const double ms = median(serial), mt = median(streaming);
    return {mt <= 1.5 * ms, fmt("median test MSE: streaming %.4g, serial %.4g, ratio %.3f", mt, ms, mt / ms)};
}

Outcome determinism(Runs& runs) {
    runs.serial_repeat = run(preset_config("E1-desk"), WorkflowMode::Serial, 1, "repeat");
    const auto a = metrics_section(runs.serial.front());
    const auto b = metrics_section(runs.serial_repeat);
    return {a == b, fmt("metric sections %s (%zu bytes)", a == b ? "identical" : "differ", a.size())};
}

}  // namespace

int main(int argc, char** argv) {
    if (argc > 1) {
        g_report_dir = argv[1];
        fs::create_directories(g_report_dir);
    }
    Runs runs;
    const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
        {"geometry identities", geometry},
        {"ToF grid", tof_grid},
        {"loss/gradient suite", loss_suite},
        {"sampler correctness", sampler},
        {"workflow ordering", [&] { return ordering(runs); }},
        {"AL data efficiency", [&] { return data_efficiency(runs); }},
        {"streaming speedup", [&] { return speedup(runs); }},
        {"accuracy parity", [&] { return parity(runs); }},
        {"determinism", [&] { return determinism(runs); }},
    };
    int failed = 0;
    for (std::size_t i = 0; i < criteria.size(); ++i) {
        const auto t0 = std::chrono::steady_clock::now();
        Outcome o;
        try {
            o = criteria[i].second();
        } catch (const std::exception& e) {
            o = {false, std::string("error: ") + e.what()};
        }
        const double s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        failed += !o.pass;
        std::cout << "criterion " << i + 1 << " [" << criteria[i].first << "]: " << (o.pass ? "PASS" : "FAIL") << " - "
                  << o.detail << fmt(" (%.1f s)", s) << std::endl;
    }
    std::cout << (failed ? "FAILED " + std::to_string(failed) + " of 9" : std::string("all 9 criteria passed"))
              << std::endl;
    return failed ? 1 : 0;
}
