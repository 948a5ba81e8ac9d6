#include "alstream/nnet.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>
#include <stdexcept>
#include <string>

#include "alstream/binary_io.hpp"
#include "alstream/worker_pool.hpp"

namespace alstream {

namespace {

constexpr char kModelMagic[9] = "ALSMODL1";
constexpr std::uint32_t kModelVersion = 1;
constexpr std::size_t kEvalChunk = 256;

Eigen::MatrixXd glorot(Eigen::Index rows, Eigen::Index cols, std::mt19937_64& rng) {
    const double limit = std::sqrt(6.0 / static_cast<double>(rows + cols));
    std::uniform_real_distribution<double> u(-limit, limit);
    Eigen::MatrixXd m(rows, cols);
    for (Eigen::Index j = 0; j < cols; ++j)
        for (Eigen::Index i = 0; i < rows; ++i) m(i, j) = u(rng);
    return m;
}

struct Activations {
    Eigen::MatrixXd a1;  // tanh(w1 x + b1)
    Eigen::MatrixXd a2;  // tanh(w2 a1 + b2)
    BatchPrediction out;
};

Activations run_forward(const ModelState& m, const Eigen::MatrixXd& x) {
    if (static_cast<std::size_t>(x.rows()) != m.dims().input)
        throw std::invalid_argument("input length " + std::to_string(x.rows()) +
                                    " does not match model input " + std::to_string(m.dims().input));
    Activations act;
    act.a1 = ((m.w1 * x).colwise() + m.b1.col(0)).array().tanh().matrix();
    act.a2 = ((m.w2 * act.a1).colwise() + m.b2.col(0)).array().tanh().matrix();
    act.out.logits = (m.wc * act.a2).colwise() + m.bc.col(0);
    act.out.y_hat = (m.wr * act.a2).colwise() + m.br.col(0);
    act.out.log_var = ((m.wv * act.a2).colwise() + m.bv.col(0)).row(0);
    return act;
}

// Per-column log-sum-exp.
Eigen::RowVectorXd log_sum_exp(const Eigen::MatrixXd& logits) {
    const Eigen::RowVectorXd mx = logits.colwise().maxCoeff();
    return mx.array() + (logits.rowwise() - mx).array().exp().colwise().sum().log();
}

struct LossSums {
    double class_sum = 0.0;
    double reg_sum = 0.0;
    double sq_sum = 0.0;
};

LossSums loss_sums(const BatchPrediction& p, const Dataset& batch) {
    const auto n = static_cast<Eigen::Index>(batch.size());
    const Eigen::RowVectorXd lse = log_sum_exp(p.logits);
    const Eigen::MatrixXd residual = batch.masks.cwiseProduct(batch.targets - p.y_hat);
    const Eigen::RowVectorXd sq = residual.colwise().squaredNorm();
    LossSums s;
    for (Eigen::Index j = 0; j < n; ++j) {
        s.class_sum += lse(j) - p.logits(batch.labels[static_cast<std::size_t>(j)], j);
        s.reg_sum += sq(j) * std::exp(-p.log_var(j)) + p.log_var(j);
        s.sq_sum += sq(j);
    }
    return s;
}

void check_batch(const ModelState& model, const Dataset& batch) {
    if (batch.empty()) throw std::invalid_argument("loss requires a nonempty batch");
    if (batch.input_dim() != model.dims().input)
        throw std::invalid_argument("batch input dimension does not match the model");
}

}  // namespace

ModelState ModelState::zeros(const ModelDims& d) {
    const auto in = static_cast<Eigen::Index>(d.input);
    const auto h1 = static_cast<Eigen::Index>(d.hidden1);
    const auto h2 = static_cast<Eigen::Index>(d.hidden2);
    ModelState m;
    m.w1 = Eigen::MatrixXd::Zero(h1, in);
    m.b1 = Eigen::MatrixXd::Zero(h1, 1);
    m.w2 = Eigen::MatrixXd::Zero(h2, h1);
    m.b2 = Eigen::MatrixXd::Zero(h2, 1);
    m.wc = Eigen::MatrixXd::Zero(3, h2);
    m.bc = Eigen::MatrixXd::Zero(3, 1);
    m.wr = Eigen::MatrixXd::Zero(kTargetDims, h2);
    m.br = Eigen::MatrixXd::Zero(kTargetDims, 1);
    m.wv = Eigen::MatrixXd::Zero(1, h2);
    m.bv = Eigen::MatrixXd::Zero(1, 1);
    return m;
}

ModelState ModelState::initialized(const ModelDims& d, std::uint64_t seed) {
    if (d.input == 0 || d.hidden1 == 0 || d.hidden2 == 0)
        throw std::invalid_argument("model dimensions must be positive");
    std::mt19937_64 rng(seed);
    ModelState m = zeros(d);
    m.w1 = glorot(m.w1.rows(), m.w1.cols(), rng);
    m.w2 = glorot(m.w2.rows(), m.w2.cols(), rng);
    m.wc = glorot(m.wc.rows(), m.wc.cols(), rng);
    m.wr = glorot(m.wr.rows(), m.wr.cols(), rng);
    m.wv = glorot(m.wv.rows(), m.wv.cols(), rng);
    // Regression outputs start at the middle of the normalized range.
    m.br.setConstant(0.5);
    return m;
}

ModelDims ModelState::dims() const noexcept {
    return {static_cast<std::size_t>(w1.cols()), static_cast<std::size_t>(w1.rows()),
            static_cast<std::size_t>(w2.rows())};
}

std::size_t ModelState::parameter_count() const noexcept {
    std::size_t n = 0;
    for (const auto* t : tensors()) n += static_cast<std::size_t>(t->size());
    return n;
}

std::array<Eigen::MatrixXd*, ModelState::kTensorCount> ModelState::tensors() noexcept {
    return {&w1, &b1, &w2, &b2, &wc, &bc, &wr, &br, &wv, &bv};
}

std::array<const Eigen::MatrixXd*, ModelState::kTensorCount> ModelState::tensors() const noexcept {
    return {&w1, &b1, &w2, &b2, &wc, &bc, &wr, &br, &wv, &bv};
}

bool ModelState::all_finite() const noexcept {
    for (const auto* t : tensors())
        if (!t->allFinite()) return false;
    return true;
}

Dataset Dataset::from_samples(std::span<const LabeledSample> samples) {
    Dataset d;
    const auto n = static_cast<Eigen::Index>(samples.size());
    const auto dim = samples.empty() ? Eigen::Index{0} : static_cast<Eigen::Index>(samples[0].input.size());
    d.inputs.resize(dim, n);
    d.targets.resize(kTargetDims, n);
    d.masks.resize(kTargetDims, n);
    d.labels.reserve(samples.size());
    for (Eigen::Index j = 0; j < n; ++j) {
        const auto& s = samples[static_cast<std::size_t>(j)];
        if (static_cast<Eigen::Index>(s.input.size()) != dim)
            throw std::invalid_argument("samples have inconsistent input lengths");
        d.inputs.col(j) = Eigen::Map<const Eigen::VectorXd>(s.input.data(), dim);
        for (int k = 0; k < kTargetDims; ++k) {
            d.targets(k, j) = s.target[k];
            d.masks(k, j) = s.mask[k];
        }
        d.labels.push_back(s.label);
    }
    return d;
}

LabeledSample Dataset::sample(std::size_t i) const {
    LabeledSample s;
    const auto j = static_cast<Eigen::Index>(i);
    s.input.assign(inputs.col(j).data(), inputs.col(j).data() + inputs.rows());
    s.label = labels.at(i);
    for (int k = 0; k < kTargetDims; ++k) {
        s.target[k] = targets(k, j);
        s.mask[k] = masks(k, j);
    }
    return s;
}

Dataset Dataset::gather(std::span<const std::size_t> indices) const {
    Dataset d;
    const auto n = static_cast<Eigen::Index>(indices.size());
    d.inputs.resize(inputs.rows(), n);
    d.targets.resize(kTargetDims, n);
    d.masks.resize(kTargetDims, n);
    d.labels.resize(indices.size());
    for (Eigen::Index j = 0; j < n; ++j) {
        const auto src = static_cast<Eigen::Index>(indices[static_cast<std::size_t>(j)]);
        d.inputs.col(j) = inputs.col(src);
        d.targets.col(j) = targets.col(src);
        d.masks.col(j) = masks.col(src);
        d.labels[static_cast<std::size_t>(j)] = labels[static_cast<std::size_t>(src)];
    }
    return d;
}

void Dataset::append(const Dataset& other) {
    if (other.empty()) return;
    if (empty()) {
        *this = other;
        return;
    }
    if (other.inputs.rows() != inputs.rows())
        throw std::invalid_argument("cannot append datasets with different input dimensions");
    const Eigen::Index n = inputs.cols();
    const Eigen::Index m = other.inputs.cols();
    inputs.conservativeResize(Eigen::NoChange, n + m);
    inputs.rightCols(m) = other.inputs;
    targets.conservativeResize(Eigen::NoChange, n + m);
    targets.rightCols(m) = other.targets;
    masks.conservativeResize(Eigen::NoChange, n + m);
    masks.rightCols(m) = other.masks;
    labels.insert(labels.end(), other.labels.begin(), other.labels.end());
}

std::vector<double> pool_profile(std::span<const double> intensity, std::size_t out_bins) {
    if (out_bins == 0) return {intensity.begin(), intensity.end()};
    const std::size_t n = intensity.size();
    if (out_bins > n) throw std::invalid_argument("cannot pool a profile into more bins than it has");
    std::vector<double> out(out_bins);
    for (std::size_t j = 0; j < out_bins; ++j) {
        const std::size_t lo = j * n / out_bins;
        const std::size_t hi = (j + 1) * n / out_bins;
        out[j] = std::accumulate(intensity.begin() + static_cast<std::ptrdiff_t>(lo),
                                 intensity.begin() + static_cast<std::ptrdiff_t>(hi), 0.0) /
                 static_cast<double>(hi - lo);
    }
    return out;
}

std::array<double, kTargetDims> free_mask(SymmetryClass s) noexcept {
    switch (s) {
        case SymmetryClass::Cubic: return {1.0, 0.0, 0.0};
        case SymmetryClass::Trigonal: return {1.0, 0.0, 1.0};
        case SymmetryClass::Tetragonal: return {1.0, 1.0, 0.0};
    }
    return {0.0, 0.0, 0.0};
}

std::array<double, kTargetDims> normalize_targets(const CellParams& cell, const ParamSpace& space) {
    const double raw[kTargetDims] = {cell.a, cell.c, cell.alpha};
    std::array<double, kTargetDims> out{};
    for (int k = 0; k < kTargetDims; ++k) {
        const Range r = space.target_range(k);
        out[k] = (raw[k] - r.lo) / r.width();
    }
    return out;
}

LabeledSample make_labeled_sample(const BraggProfile& profile, const CellParams& cell,
                                  const ParamSpace& space, std::size_t input_bins) {
    return {pool_profile(profile.intensity, input_bins), class_index(cell.symmetry),
            normalize_targets(cell, space), free_mask(cell.symmetry)};
}

Dataset make_dataset(std::span<const SimulatedSample> samples, const ParamSpace& space,
                     std::size_t input_bins) {
    std::vector<LabeledSample> labeled;
    labeled.reserve(samples.size());
    for (const auto& s : samples) labeled.push_back(make_labeled_sample(s.profile, s.cell, space, input_bins));
    return Dataset::from_samples(labeled);
}

Prediction forward(const ModelState& model, std::span<const double> x) {
    const Eigen::MatrixXd col = Eigen::Map<const Eigen::VectorXd>(x.data(), static_cast<Eigen::Index>(x.size()));
    const auto act = run_forward(model, col);
    return {act.out.logits.col(0), act.out.y_hat.col(0), act.out.log_var(0)};
}

BatchPrediction forward(const ModelState& model, const Eigen::MatrixXd& inputs) {
    return run_forward(model, inputs).out;
}

LossParts loss(const ModelState& model, const Dataset& batch) {
    check_batch(model, batch);
    const auto s = loss_sums(forward(model, batch.inputs), batch);
    const double n = static_cast<double>(batch.size());
    LossParts out{0.0, s.class_sum / n, s.reg_sum / n};
    out.total = out.class_loss + out.reg_loss;
    return out;
}

LossAndGrad loss_and_grad(const ModelState& model, const Dataset& batch) {
    check_batch(model, batch);
    const auto act = run_forward(model, batch.inputs);
    const auto& p = act.out;
    const auto n = static_cast<Eigen::Index>(batch.size());
    const double inv_n = 1.0 / static_cast<double>(n);

    LossAndGrad out;
    const auto sums = loss_sums(p, batch);
    out.loss.class_loss = sums.class_sum * inv_n;
    out.loss.reg_loss = sums.reg_sum * inv_n;
    out.loss.total = out.loss.class_loss + out.loss.reg_loss;

    // d/dlogits: (softmax - onehot) / n
    const Eigen::RowVectorXd lse = log_sum_exp(p.logits);
    Eigen::MatrixXd d_logits = (p.logits.rowwise() - lse).array().exp().matrix();
    for (Eigen::Index j = 0; j < n; ++j) d_logits(batch.labels[static_cast<std::size_t>(j)], j) -= 1.0;
    d_logits *= inv_n;

    // reg term per sample: |m*(t - y)|^2 e^{-v} + v
    const Eigen::MatrixXd residual = batch.masks.cwiseProduct(batch.targets - p.y_hat);
    const Eigen::RowVectorXd sq = residual.colwise().squaredNorm();
    const Eigen::RowVectorXd inv_var = (-p.log_var.array()).exp();
    Eigen::MatrixXd d_yhat = -2.0 * inv_n * batch.masks.cwiseProduct(residual);
    d_yhat.array().rowwise() *= inv_var.array();
    const Eigen::RowVectorXd d_logvar = inv_n * (1.0 - sq.array() * inv_var.array());

    ModelState& g = out.grad;
    g.wc = d_logits * act.a2.transpose();
    g.bc = d_logits.rowwise().sum();
    g.wr = d_yhat * act.a2.transpose();
    g.br = d_yhat.rowwise().sum();
    g.wv = d_logvar * act.a2.transpose();
    g.bv = Eigen::MatrixXd::Constant(1, 1, d_logvar.sum());

    Eigen::MatrixXd d_a2 = model.wc.transpose() * d_logits + model.wr.transpose() * d_yhat +
                           model.wv.transpose() * d_logvar;
    const Eigen::MatrixXd d_z2 = d_a2.cwiseProduct((1.0 - act.a2.array().square()).matrix());
    g.w2 = d_z2 * act.a1.transpose();
    g.b2 = d_z2.rowwise().sum();

    const Eigen::MatrixXd d_a1 = model.w2.transpose() * d_z2;
    const Eigen::MatrixXd d_z1 = d_a1.cwiseProduct((1.0 - act.a1.array().square()).matrix());
    g.w1 = d_z1 * batch.inputs.transpose();
    g.b1 = d_z1.rowwise().sum();
    return out;
}

ModelState grad(const ModelState& model, const Dataset& batch) {
    return loss_and_grad(model, batch).grad;
}

EvalMetrics evaluate(const ModelState& model, const Dataset& data, std::size_t pool_size) {
    if (data.empty()) throw std::invalid_argument("evaluate requires a nonempty dataset");
    check_batch(model, data);
    const std::size_t n = data.size();
    const std::size_t chunks = (n + kEvalChunk - 1) / kEvalChunk;
    std::vector<LossSums> partial(chunks);
    parallel_for(chunks, pool_size, [&](std::size_t c) {
        const std::size_t lo = c * kEvalChunk;
        const std::size_t hi = std::min(n, lo + kEvalChunk);
        std::vector<std::size_t> idx(hi - lo);
        std::iota(idx.begin(), idx.end(), lo);
        const Dataset part = data.gather(idx);
        partial[c] = loss_sums(forward(model, part.inputs), part);
    });
    LossSums total;
    for (const auto& s : partial) {
        total.class_sum += s.class_sum;
        total.reg_sum += s.reg_sum;
        total.sq_sum += s.sq_sum;
    }
    const double dn = static_cast<double>(n);
    EvalMetrics m;
    m.class_loss = total.class_sum / dn;
    m.reg_loss = total.reg_sum / dn;
    m.mse = total.sq_sum / dn;
    m.total = m.class_loss + m.reg_loss;
    return m;
}

AdamOptimizer::AdamOptimizer(const ModelState& like, AdamConfig cfg)
    : cfg_(cfg), m_(ModelState::zeros(like.dims())), v_(ModelState::zeros(like.dims())) {}

void AdamOptimizer::step(ModelState& model, const ModelState& gradient) {
    ++step_;
    const double c1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(step_));
    const double c2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(step_));
    auto params = model.tensors();
    auto grads = gradient.tensors();
    auto ms = m_.tensors();
    auto vs = v_.tensors();
    for (std::size_t t = 0; t < ModelState::kTensorCount; ++t) {
        auto& m = *ms[t];
        auto& v = *vs[t];
        const auto& g = *grads[t];
        m = cfg_.beta1 * m + (1.0 - cfg_.beta1) * g;
        v = cfg_.beta2 * v + (1.0 - cfg_.beta2) * g.cwiseProduct(g);
        params[t]->array() -=
            cfg_.learning_rate * (m.array() / c1) / ((v.array() / c2).sqrt() + cfg_.epsilon);
    }
}

void TrainConfig::validate() const {
    if (batch_size < 1) throw std::invalid_argument("batch size must be >= 1");
    if (!(adam.learning_rate > 0.0)) throw std::invalid_argument("learning rate must be positive");
    if (adam.beta1 < 0.0 || adam.beta1 >= 1.0 || adam.beta2 < 0.0 || adam.beta2 >= 1.0)
        throw std::invalid_argument("moment coefficients must lie in [0, 1)");
    if (epoch_rule == EpochRule::Schedule) {
        if (epochs.empty()) throw std::invalid_argument("epoch schedule must not be empty");
        for (int e : epochs)
            if (e < 1) throw std::invalid_argument("epochs must be >= 1 per phase");
    } else if (!(epoch_constant > 0.0)) {
        throw std::invalid_argument("inverse-sqrt epoch rule needs a positive constant");
    }
    if (hidden1 < 1 || hidden2 < 1) throw std::invalid_argument("hidden sizes must be >= 1");
    if (eval_pool_size < 1) throw std::invalid_argument("eval pool size must be >= 1");
}

int TrainConfig::epochs_for_phase(std::size_t phase, std::size_t n_train) const {
    if (epoch_rule == EpochRule::InverseSqrt) {
        if (n_train == 0) throw std::invalid_argument("epoch rule needs a nonempty training set");
        return std::max(1, static_cast<int>(std::lround(epoch_constant / std::sqrt(static_cast<double>(n_train)))));
    }
    return epochs.at(std::min(phase, epochs.size() - 1));
}

TrainResult train(const ModelState& initial, const Dataset& train_set, const Dataset& val_set,
                  const TrainConfig& cfg, int epochs, std::uint64_t seed, std::stop_token stop) {
    cfg.validate();
    if (train_set.empty() || val_set.empty())
        throw std::invalid_argument("train requires nonempty training and validation sets");
    if (epochs < 0) throw std::invalid_argument("epochs must be >= 0");

    TrainResult result;
    result.best = initial;
    {
        const auto t = evaluate(initial, train_set, cfg.eval_pool_size);
        const auto v = evaluate(initial, val_set, cfg.eval_pool_size);
        result.history.push_back({0, t.total, v.total, v.class_loss, v.mse});
    }
    double best_val = result.history.front().val_total;

    ModelState model = initial;
    AdamOptimizer adam(model, cfg.adam);
    std::mt19937_64 rng(seed);
    std::vector<std::size_t> order(train_set.size());
    std::iota(order.begin(), order.end(), 0);

    for (int epoch = 1; epoch <= epochs; ++epoch) {
        std::shuffle(order.begin(), order.end(), rng);
        double weighted = 0.0;
        for (std::size_t lo = 0; lo < order.size(); lo += cfg.batch_size) {
            if (stop.stop_requested()) throw Cancelled{};
            const std::size_t hi = std::min(order.size(), lo + cfg.batch_size);
            const Dataset batch = train_set.gather(std::span(order).subspan(lo, hi - lo));
            auto step = loss_and_grad(model, batch);
            if (!std::isfinite(step.loss.total)) {
                std::ostringstream msg;
                msg << "training diverged at epoch " << epoch << ", sample offset " << lo
                    << ": class_loss=" << step.loss.class_loss << " reg_loss=" << step.loss.reg_loss;
                throw std::runtime_error(msg.str());
            }
            weighted += step.loss.total * static_cast<double>(hi - lo);
            adam.step(model, step.grad);
        }
        const auto v = evaluate(model, val_set, cfg.eval_pool_size);
        if (!std::isfinite(v.total))
            throw std::runtime_error("validation loss is not finite after epoch " + std::to_string(epoch));
        result.history.push_back(
            {epoch, weighted / static_cast<double>(order.size()), v.total, v.class_loss, v.mse});
        if (v.total < best_val) {
            best_val = v.total;
            result.best = model;
            result.best_epoch = epoch;
        }
    }
    return result;
}

void save_model(const std::filesystem::path& path, const ModelState& model) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
    binary::write_magic(out, kModelMagic);
    binary::write<std::uint32_t>(out, kModelVersion);
    const auto d = model.dims();
    binary::write<std::uint64_t>(out, d.input);
    binary::write<std::uint64_t>(out, d.hidden1);
    binary::write<std::uint64_t>(out, d.hidden2);
    for (const auto* t : model.tensors())
        for (Eigen::Index i = 0; i < t->size(); ++i) binary::write<double>(out, t->data()[i]);
    if (!out) throw std::runtime_error("write failed: " + path.string());
}

ModelState load_model(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open " + path.string());
    binary::expect_magic(in, kModelMagic, "model checkpoint");
    if (const auto v = binary::read<std::uint32_t>(in); v != kModelVersion)
        throw std::runtime_error("unsupported checkpoint version " + std::to_string(v));
    ModelDims d;
    d.input = binary::read<std::uint64_t>(in);
    d.hidden1 = binary::read<std::uint64_t>(in);
    d.hidden2 = binary::read<std::uint64_t>(in);
    ModelState m = ModelState::zeros(d);
    for (auto* t : m.tensors())
        for (Eigen::Index i = 0; i < t->size(); ++i) t->data()[i] = binary::read<double>(in);
    return m;
}

void write_history_csv(const std::filesystem::path& path, std::span<const EpochRecord> history) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
    out.precision(17);
    out << "epoch,train_total,val_total,val_class,val_mse\n";
    for (const auto& r : history)
        out << r.epoch << ',' << r.train_total << ',' << r.val_total << ',' << r.val_class << ','
            << r.val_mse << '\n';
}

}  // namespace alstream
