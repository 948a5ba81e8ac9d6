#pragma once

#include <Eigen/Dense>

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <stop_token>
#include <variant>
#include <vector>

#include "alstream/lattice.hpp"
#include "alstream/nnet.hpp"
#include "alstream/simulator.hpp"

namespace alstream {

// Equally spaced probe points and the model inputs simulated at them.
struct StudySet {
    ParamBatch params;
    Eigen::MatrixXd inputs;  // input_dim x N, column n is the (pooled) profile of params[n]
    GridSpacing spacing{};

    std::size_t size() const noexcept { return params.size(); }
};

// Sweeps roughly `total` points (split evenly across classes) and simulates
// them with `cfg`.
StudySet build_study_set(const ParamSpace& space, const SimConfig& cfg, std::size_t total,
                         std::size_t input_bins, std::uint64_t seed, std::stop_token stop = {});

struct UniformPrior {};

// Axis-aligned Gaussian over each class's free parameters, truncated to the
// parameter space. Its unnormalized density peaks at 1.
struct TruncGaussianPrior {
    GridSpacing center{};
    GridSpacing scale{};
};

struct Prior {
    ParamSpace space;
    std::variant<UniformPrior, TruncGaussianPrior> shape;

    bool is_uniform() const noexcept { return std::holds_alternative<UniformPrior>(shape); }
    // Unnormalized density in [0, 1]; 0 outside the space.
    double value(const CellParams& y) const;
    static constexpr double kMaxValue = 1.0;
};

// Gaussian-mixture sampling density over the study points, weighted by the
// normalized predicted variance at each point. Components only act on cells
// of their own symmetry class.
struct ALDensity {
    ParamBatch centers;
    std::vector<double> weights;
    GridSpacing tau{};
    Prior prior;

    void validate() const;
};

// w_n = exp(log_var_n) / sum_m exp(log_var_m). Throws std::runtime_error
// when any predicted log-variance is non-finite.
std::vector<double> compute_weights(const ModelState& model, const StudySet& study,
                                    std::size_t pool_size = 1);

// tau = multiplier * study grid spacing, per class and dimension.
ALDensity make_density(const StudySet& study, std::vector<double> weights, Prior prior,
                       double tau_multiplier = 1.0);

// Unnormalized mixture density at y, 0 outside the prior support.
double density(const CellParams& y, const ALDensity& d);

struct MixtureDraw {
    ParamBatch params;
    std::vector<std::size_t> components;  // component that produced each sample
    std::size_t trials = 0;
};

inline constexpr std::size_t kSamplerTrialBudget = 1'000'000;
inline constexpr double kSamplerMinAcceptance = 1e-4;

// Component ~ Categorical(w), offset ~ N(0, tau^2) per free dimension; a draw
// leaving the support is discarded together with its component. Non-uniform
// priors add an acceptance step with probability prior(y) / max prior.
// Throws std::runtime_error when acceptance falls below 1e-4 after 1e6 trials.
MixtureDraw sample_with_components(const ALDensity& d, std::size_t n, std::uint64_t seed);
ParamBatch sample(const ALDensity& d, std::size_t n, std::uint64_t seed);

ParamBatch next_batch(const ModelState& model, const StudySet& study, const Prior& prior,
                      std::size_t n, std::uint64_t seed, double tau_multiplier = 1.0,
                      std::size_t pool_size = 1);

// component,class,weight,class_mass
void write_weight_diagnostics(const std::filesystem::path& path, const ALDensity& d);

}  // namespace alstream
