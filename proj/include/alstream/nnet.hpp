#pragma once

#include <Eigen/Dense>

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <stop_token>
#include <vector>

#include "alstream/lattice.hpp"
#include "alstream/simulator.hpp"

namespace alstream {

inline constexpr int kTargetDims = 3;  // (a, c, alpha), min-max normalized

struct ModelDims {
    std::size_t input = 512;
    std::size_t hidden1 = 256;
    std::size_t hidden2 = 64;

    friend bool operator==(const ModelDims&, const ModelDims&) = default;
};

// Multitask MLP. A tanh trunk (input -> hidden1 -> hidden2) feeds three
// linear heads: class logits, normalized cell parameters and a scalar
// log-variance. Biases are stored as single-column matrices so every tensor
// has the same type. The same struct doubles as a gradient container.
struct ModelState {
    Eigen::MatrixXd w1, b1;  // hidden1 x input, hidden1 x 1
    Eigen::MatrixXd w2, b2;  // hidden2 x hidden1
    Eigen::MatrixXd wc, bc;  // 3 x hidden2, class logits
    Eigen::MatrixXd wr, br;  // 3 x hidden2, regression
    Eigen::MatrixXd wv, bv;  // 1 x hidden2, log-variance

    static constexpr std::size_t kTensorCount = 10;

    static ModelState zeros(const ModelDims& dims);
    // Glorot-uniform weights, zero biases.
    static ModelState initialized(const ModelDims& dims, std::uint64_t seed);

    ModelDims dims() const noexcept;
    std::size_t parameter_count() const noexcept;
    std::array<Eigen::MatrixXd*, kTensorCount> tensors() noexcept;
    std::array<const Eigen::MatrixXd*, kTensorCount> tensors() const noexcept;
    bool all_finite() const noexcept;
};

struct LabeledSample {
    std::vector<double> input;
    int label = 0;
    std::array<double, kTargetDims> target{};
    std::array<double, kTargetDims> mask{};
};

// Column-per-sample training data.
struct Dataset {
    Eigen::MatrixXd inputs;   // input_dim x N
    std::vector<int> labels;  // N
    Eigen::MatrixXd targets;  // 3 x N
    Eigen::MatrixXd masks;    // 3 x N

    std::size_t size() const noexcept { return labels.size(); }
    std::size_t input_dim() const noexcept { return static_cast<std::size_t>(inputs.rows()); }
    bool empty() const noexcept { return labels.empty(); }

    static Dataset from_samples(std::span<const LabeledSample> samples);
    LabeledSample sample(std::size_t i) const;
    Dataset gather(std::span<const std::size_t> indices) const;
    void append(const Dataset& other);
};

// Mean-pools a profile into `out_bins` contiguous chunks (chunk j covers
// [floor(j*n/out), floor((j+1)*n/out))). out_bins == 0 returns a copy.
std::vector<double> pool_profile(std::span<const double> intensity, std::size_t out_bins);

std::array<double, kTargetDims> free_mask(SymmetryClass s) noexcept;
std::array<double, kTargetDims> normalize_targets(const CellParams& cell, const ParamSpace& space);

LabeledSample make_labeled_sample(const BraggProfile& profile, const CellParams& cell,
                                  const ParamSpace& space, std::size_t input_bins);
Dataset make_dataset(std::span<const SimulatedSample> samples, const ParamSpace& space,
                     std::size_t input_bins);

struct Prediction {
    Eigen::Vector3d logits;
    Eigen::Vector3d y_hat;
    double log_var = 0.0;
};

struct BatchPrediction {
    Eigen::MatrixXd logits;     // 3 x B
    Eigen::MatrixXd y_hat;      // 3 x B
    Eigen::RowVectorXd log_var; // B
};

Prediction forward(const ModelState& model, std::span<const double> x);
BatchPrediction forward(const ModelState& model, const Eigen::MatrixXd& inputs);

struct LossParts {
    double total = 0.0;
    double class_loss = 0.0;
    double reg_loss = 0.0;
};

// class_loss: mean softmax cross-entropy. reg_loss: mean over the batch of
// |mask*(target - y_hat)|^2 * exp(-log_var) + log_var. total = sum of both.
LossParts loss(const ModelState& model, const Dataset& batch);

struct LossAndGrad {
    LossParts loss;
    ModelState grad;
};

LossAndGrad loss_and_grad(const ModelState& model, const Dataset& batch);
ModelState grad(const ModelState& model, const Dataset& batch);

struct EvalMetrics {
    double class_loss = 0.0;
    double mse = 0.0;       // mean |mask*(target - y_hat)|^2, no variance scaling
    double reg_loss = 0.0;
    double total = 0.0;     // class_loss + reg_loss
};

// Fixed 256-sample chunks reduced in index order, so the result does not
// depend on pool_size.
EvalMetrics evaluate(const ModelState& model, const Dataset& data, std::size_t pool_size = 1);

struct AdamConfig {
    double learning_rate = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
};

class AdamOptimizer {
public:
    AdamOptimizer(const ModelState& like, AdamConfig cfg);
    void step(ModelState& model, const ModelState& gradient);

private:
    AdamConfig cfg_;
    ModelState m_;
    ModelState v_;
    long step_ = 0;
};

enum class EpochRule {
    Schedule,     // explicit per-phase list
    InverseSqrt,  // round(constant / sqrt(N_train))
};

struct TrainConfig {
    std::size_t batch_size = 512;
    AdamConfig adam;
    std::vector<int> epochs{400, 300, 250, 200};
    EpochRule epoch_rule = EpochRule::Schedule;
    double epoch_constant = 0.0;
    std::size_t input_bins = 0;  // 0: use the full profile
    std::size_t hidden1 = 256;
    std::size_t hidden2 = 64;
    std::size_t eval_pool_size = 1;
    std::uint64_t seed = 0;

    void validate() const;
    // Epochs for a zero-based phase trained on n_train samples. Phases past
    // the end of the schedule reuse its last entry.
    int epochs_for_phase(std::size_t phase, std::size_t n_train) const;
};

struct EpochRecord {
    int epoch = 0;
    double train_total = 0.0;
    double val_total = 0.0;
    double val_class = 0.0;
    double val_mse = 0.0;
};

struct TrainResult {
    ModelState best;
    int best_epoch = 0;
    std::vector<EpochRecord> history;  // row 0 evaluates the starting model
};

// Shuffled minibatch Adam for `epochs` epochs with fresh optimizer state,
// keeping the state with the lowest validation total loss (the starting model
// included). Throws std::runtime_error on a non-finite loss and Cancelled
// when `stop` is requested.
TrainResult train(const ModelState& initial, const Dataset& train_set, const Dataset& val_set,
                  const TrainConfig& cfg, int epochs, std::uint64_t seed, std::stop_token stop = {});

// "ALSMODL1", u32 version, u64 input/hidden1/hidden2, then every tensor as
// column-major little-endian f64 in declaration order.
void save_model(const std::filesystem::path& path, const ModelState& model);
ModelState load_model(const std::filesystem::path& path);

// epoch,train_total,val_total,val_class,val_mse
void write_history_csv(const std::filesystem::path& path, std::span<const EpochRecord> history);

}  // namespace alstream
