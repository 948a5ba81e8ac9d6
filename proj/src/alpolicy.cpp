#include "alstream/alpolicy.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>
#include <stdexcept>
#include <string>

#include "alstream/worker_pool.hpp"

namespace alstream {

namespace {

constexpr std::size_t kWeightChunk = 256;

}  // namespace

StudySet build_study_set(const ParamSpace& space, const SimConfig& cfg, std::size_t total,
                         std::size_t input_bins, std::uint64_t seed, std::stop_token stop) {
    if (total == 0) throw std::invalid_argument("study set size must be positive");
    auto grid = sweep_grid(space, study_grid_counts(total));
    const auto sim = simulate_batch(grid.params, space, cfg, seed, stop);

    StudySet study;
    study.spacing = grid.spacing;
    study.params = std::move(grid.params);
    const auto first = pool_profile(sim.samples.front().profile.intensity, input_bins);
    study.inputs.resize(static_cast<Eigen::Index>(first.size()), static_cast<Eigen::Index>(study.size()));
    for (std::size_t n = 0; n < sim.samples.size(); ++n) {
        const auto pooled = pool_profile(sim.samples[n].profile.intensity, input_bins);
        study.inputs.col(static_cast<Eigen::Index>(n)) =
            Eigen::Map<const Eigen::VectorXd>(pooled.data(), static_cast<Eigen::Index>(pooled.size()));
    }
    return study;
}

double Prior::value(const CellParams& y) const {
    if (!space.contains(y)) return 0.0;
    if (const auto* g = std::get_if<TruncGaussianPrior>(&shape)) {
        const int ci = class_index(y.symmetry);
        const auto free = y.free_values();
        double q = 0.0;
        for (int d = 0; d < free_dim_count(y.symmetry); ++d) {
            const double z = (free[d] - g->center[ci][d]) / g->scale[ci][d];
            q += z * z;
        }
        return std::exp(-0.5 * q);
    }
    return 1.0;
}

void ALDensity::validate() const {
    if (centers.empty()) throw std::invalid_argument("density needs at least one study point");
    if (weights.size() != centers.size())
        throw std::invalid_argument("weights and study points differ in length");
    double sum = 0.0;
    for (double w : weights) {
        if (!(w >= 0.0) || !std::isfinite(w)) throw std::invalid_argument("weights must be finite and >= 0");
        sum += w;
    }
    if (std::abs(sum - 1.0) > 1e-9) throw std::invalid_argument("weights must sum to 1");
    for (auto s : kAllClasses)
        for (int d = 0; d < free_dim_count(s); ++d)
            if (!(tau[class_index(s)][d] > 0.0))
                throw std::invalid_argument("tau must be positive for every class and dimension");
    if (const auto* g = std::get_if<TruncGaussianPrior>(&prior.shape))
        for (auto s : kAllClasses)
            for (int d = 0; d < free_dim_count(s); ++d)
                if (!(g->scale[class_index(s)][d] > 0.0))
                    throw std::invalid_argument("prior scale must be positive");
}

std::vector<double> compute_weights(const ModelState& model, const StudySet& study,
                                    std::size_t pool_size) {
    const std::size_t n = study.size();
    if (n == 0) throw std::invalid_argument("study set is empty");
    if (static_cast<std::size_t>(study.inputs.rows()) != model.dims().input)
        throw std::invalid_argument("study inputs do not match the model input dimension");

    std::vector<double> log_var(n);
    const std::size_t chunks = (n + kWeightChunk - 1) / kWeightChunk;
    parallel_for(chunks, pool_size, [&](std::size_t c) {
        const auto lo = static_cast<Eigen::Index>(c * kWeightChunk);
        const auto len = static_cast<Eigen::Index>(std::min(n, (c + 1) * kWeightChunk)) - lo;
        const auto pred = forward(model, Eigen::MatrixXd(study.inputs.middleCols(lo, len)));
        for (Eigen::Index j = 0; j < len; ++j) log_var[static_cast<std::size_t>(lo + j)] = pred.log_var(j);
    });

    for (std::size_t i = 0; i < n; ++i)
        if (!std::isfinite(log_var[i]))
            throw std::runtime_error("non-finite log-variance at study point " + std::to_string(i) +
                                     "; the model has diverged");

    // exp(v - max v) keeps the largest term at 1; the shift cancels in the ratio.
    const double peak = *std::max_element(log_var.begin(), log_var.end());
    std::vector<double> w(n);
    for (std::size_t i = 0; i < n; ++i) w[i] = std::exp(log_var[i] - peak);
    const double sum = std::accumulate(w.begin(), w.end(), 0.0);
    for (double& x : w) x /= sum;
    return w;
}

ALDensity make_density(const StudySet& study, std::vector<double> weights, Prior prior,
                       double tau_multiplier) {
    if (!(tau_multiplier > 0.0)) throw std::invalid_argument("tau multiplier must be positive");
    ALDensity d;
    d.centers = study.params;
    d.weights = std::move(weights);
    d.prior = std::move(prior);
    for (auto s : kAllClasses) {
        const int ci = class_index(s);
        for (int k = 0; k < free_dim_count(s); ++k) {
            // A class absent from the study has no components; give it the
            // width of its range so the density stays well formed.
            const double spacing = study.spacing[ci][k] > 0.0 ? study.spacing[ci][k]
                                                                : d.prior.space.range(s, k).width();
            d.tau[ci][k] = tau_multiplier * spacing;
        }
    }
    d.validate();
    return d;
}

double density(const CellParams& y, const ALDensity& d) {
    const double p = d.prior.value(y);
    if (p == 0.0) return 0.0;
    const int ci = class_index(y.symmetry);
    const int dims = free_dim_count(y.symmetry);
    const auto yf = y.free_values();
    double mix = 0.0;
    for (std::size_t n = 0; n < d.centers.size(); ++n) {
        const auto& c = d.centers[n];
        if (c.symmetry != y.symmetry) continue;
        const auto cf = c.free_values();
        double q = 0.0;
        for (int k = 0; k < dims; ++k) {
            const double z = (yf[k] - cf[k]) / d.tau[ci][k];
            q += z * z;
        }
        mix += d.weights[n] * std::exp(-0.5 * q);
    }
    return p * mix;
}

MixtureDraw sample_with_components(const ALDensity& d, std::size_t n, std::uint64_t seed) {
    if (n < 1) throw std::invalid_argument("sample size must be >= 1");
    d.validate();

    std::vector<double> cumulative(d.weights.size());
    std::partial_sum(d.weights.begin(), d.weights.end(), cumulative.begin());
    const double total = cumulative.back();

    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    std::normal_distribution<double> normal(0.0, 1.0);

    MixtureDraw out;
    out.params.reserve(n);
    out.components.reserve(n);
    while (out.params.size() < n) {
        if (out.trials >= kSamplerTrialBudget &&
            static_cast<double>(out.params.size()) < kSamplerMinAcceptance * static_cast<double>(out.trials))
            throw std::runtime_error("mixture sampler acceptance below 1e-4 after " +
                                     std::to_string(out.trials) + " trials; tau does not fit the support");
        ++out.trials;

        const double u = unit(rng) * total;
        auto it = std::upper_bound(cumulative.begin(), cumulative.end(), u);
        if (it == cumulative.end()) --it;
        // upper_bound never lands on a zero-weight component.
        const auto k = static_cast<std::size_t>(it - cumulative.begin());

        const CellParams& center = d.centers[k];
        const int ci = class_index(center.symmetry);
        auto free = center.free_values();
        for (int dim = 0; dim < free_dim_count(center.symmetry); ++dim)
            free[dim] += d.tau[ci][dim] * normal(rng);
        const CellParams y = CellParams::from_free(center.symmetry, free);
        if (!d.prior.space.contains(y)) continue;
        if (!d.prior.is_uniform() && unit(rng) * Prior::kMaxValue >= d.prior.value(y)) continue;
        out.params.push_back(y);
        out.components.push_back(k);
    }
    return out;
}

ParamBatch sample(const ALDensity& d, std::size_t n, std::uint64_t seed) {
    return sample_with_components(d, n, seed).params;
}

ParamBatch next_batch(const ModelState& model, const StudySet& study, const Prior& prior,
                      std::size_t n, std::uint64_t seed, double tau_multiplier, std::size_t pool_size) {
    auto weights = compute_weights(model, study, pool_size);
    const auto d = make_density(study, std::move(weights), prior, tau_multiplier);
    return sample(d, n, seed);
}

void write_weight_diagnostics(const std::filesystem::path& path, const ALDensity& d) {
    std::array<double, kNumClasses> mass{};
    for (std::size_t n = 0; n < d.centers.size(); ++n) mass[class_index(d.centers[n].symmetry)] += d.weights[n];
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
    out.precision(17);
    out << "component,class,weight,class_mass\n";
    for (std::size_t n = 0; n < d.centers.size(); ++n) {
        const int ci = class_index(d.centers[n].symmetry);
        out << n << ',' << class_name(d.centers[n].symmetry) << ',' << d.weights[n] << ',' << mass[ci] << '\n';
    }
}

}  // namespace alstream
