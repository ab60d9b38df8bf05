#pragma once

// Learned surface estimator: a dense ReLU regressor from normalized power
// measurements to the five surface coefficients, trained with Adam on MSE
// and early stopping on the validation loss.

#include <Eigen/Dense>
#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <limits>
#include <numeric>
#include <span>
#include <stdexcept>
#include <vector>

#include "flexris/binary_io.hpp"
#include "flexris/geometry.hpp"
#include "flexris/measurement.hpp"
#include "flexris/rng.hpp"

namespace flexris {

struct DenseLayer {
    Eigen::MatrixXd weight;  // out x in
    Eigen::VectorXd bias;    // out

    std::size_t in() const { return static_cast<std::size_t>(weight.cols()); }
    std::size_t out() const { return static_cast<std::size_t>(weight.rows()); }
    friend bool operator==(const DenseLayer& a, const DenseLayer& b) { return a.weight == b.weight && a.bias == b.bias; }
};

/// Layer stack; every layer but the last is followed by a ReLU.
struct MlpParams {
    std::vector<DenseLayer> layers;

    static MlpParams zeros(std::span<const std::size_t> sizes) {
        if (sizes.size() < 2) throw std::invalid_argument("MlpParams: need at least input and output sizes");
        MlpParams p;
        for (std::size_t l = 0; l + 1 < sizes.size(); ++l) {
            if (sizes[l] == 0 || sizes[l + 1] == 0) throw std::invalid_argument("MlpParams: zero layer width");
            p.layers.push_back({Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(sizes[l + 1]), static_cast<Eigen::Index>(sizes[l])),
                                Eigen::VectorXd::Zero(static_cast<Eigen::Index>(sizes[l + 1]))});
        }
        return p;
    }

    /// Uniform He initialisation: W ~ U(-sqrt(6/fan_in), sqrt(6/fan_in)), b = 0.
    static MlpParams he_uniform(std::span<const std::size_t> sizes, Rng& rng) {
        MlpParams p = zeros(sizes);
        for (auto& layer : p.layers) {
            const double limit = std::sqrt(6.0 / static_cast<double>(layer.in()));
            for (Eigen::Index i = 0; i < layer.weight.size(); ++i) layer.weight.data()[i] = uniform(rng, -limit, limit);
        }
        return p;
    }

    std::vector<std::size_t> sizes() const {
        std::vector<std::size_t> s;
        if (layers.empty()) return s;
        s.push_back(layers.front().in());
        for (const auto& l : layers) s.push_back(l.out());
        return s;
    }

    std::size_t input_dim() const { return layers.empty() ? 0 : layers.front().in(); }
    std::size_t output_dim() const { return layers.empty() ? 0 : layers.back().out(); }

    std::size_t parameter_count() const {
        std::size_t n = 0;
        for (const auto& l : layers) n += static_cast<std::size_t>(l.weight.size() + l.bias.size());
        return n;
    }

    /// Flat view: for each layer, weights (column-major) then biases.
    double& parameter(std::size_t idx) {
        for (auto& l : layers) {
            const auto nw = static_cast<std::size_t>(l.weight.size());
            if (idx < nw) return l.weight.data()[idx];
            idx -= nw;
            const auto nb = static_cast<std::size_t>(l.bias.size());
            if (idx < nb) return l.bias.data()[idx];
            idx -= nb;
        }
        throw std::out_of_range("MlpParams: parameter index");
    }
    double parameter(std::size_t idx) const { return const_cast<MlpParams*>(this)->parameter(idx); }

    bool finite() const {
        for (const auto& l : layers)
            if (!l.weight.allFinite() || !l.bias.allFinite()) return false;
        return true;
    }

    friend bool operator==(const MlpParams&, const MlpParams&) = default;
};

inline std::vector<std::size_t> default_layer_sizes(std::size_t input_dim) { return {input_dim, 128, 64, 32, 5}; }

/// Batched forward pass; columns of `x` are samples.
inline Eigen::MatrixXd mlp_forward_batch(const MlpParams& params, const Eigen::MatrixXd& x) {
    if (params.layers.empty()) throw std::invalid_argument("mlp_forward: empty network");
    if (static_cast<std::size_t>(x.rows()) != params.input_dim()) throw std::invalid_argument("mlp_forward: input dimension mismatch");
    Eigen::MatrixXd a = x;
    for (std::size_t l = 0; l < params.layers.size(); ++l) {
        const auto& layer = params.layers[l];
        Eigen::MatrixXd z = layer.weight * a;
        z.colwise() += layer.bias;
        if (l + 1 < params.layers.size()) z = z.cwiseMax(0.0);
        a = std::move(z);
    }
    return a;
}

inline std::vector<double> mlp_forward(const MlpParams& params, std::span<const double> x) {
    if (x.size() != params.input_dim()) throw std::invalid_argument("mlp_forward: input dimension mismatch");
    const Eigen::MatrixXd in = Eigen::Map<const Eigen::VectorXd>(x.data(), static_cast<Eigen::Index>(x.size()));
    const Eigen::MatrixXd out = mlp_forward_batch(params, in);
    return {out.data(), out.data() + out.size()};
}

struct Gradients {
    MlpParams grads;  // same shapes as the parameters
    double loss = 0.0;
};

/// Gradient of the batch loss mean_i mean_j (y_hat_ij - y_ij)^2. Columns of
/// `x` and `y` are samples. The ReLU derivative at 0 is taken as 0.
inline Gradients mlp_backward(const MlpParams& params, const Eigen::MatrixXd& x, const Eigen::MatrixXd& y) {
    if (params.layers.empty()) throw std::invalid_argument("mlp_backward: empty network");
    if (x.cols() == 0) throw std::invalid_argument("mlp_backward: empty batch");
    if (static_cast<std::size_t>(x.rows()) != params.input_dim() || static_cast<std::size_t>(y.rows()) != params.output_dim() ||
        x.cols() != y.cols())
        throw std::invalid_argument("mlp_backward: shape mismatch");

    const std::size_t n_layers = params.layers.size();
    std::vector<Eigen::MatrixXd> act;  // act[l] is the input to layer l
    act.reserve(n_layers + 1);
    act.push_back(x);
    for (std::size_t l = 0; l < n_layers; ++l) {
        const auto& layer = params.layers[l];
        Eigen::MatrixXd z = layer.weight * act.back();
        z.colwise() += layer.bias;
        if (l + 1 < n_layers) z = z.cwiseMax(0.0);
        act.push_back(std::move(z));
    }

    const double count = static_cast<double>(y.size());
    const Eigen::MatrixXd diff = act.back() - y;
    Gradients g;
    g.loss = diff.squaredNorm() / count;
    g.grads.layers.resize(n_layers);

    Eigen::MatrixXd delta = (2.0 / count) * diff;
    for (std::size_t l = n_layers; l-- > 0;) {
        const auto& layer = params.layers[l];
        g.grads.layers[l].weight = delta * act[l].transpose();
        g.grads.layers[l].bias = delta.rowwise().sum();
        if (l > 0) {
            Eigen::MatrixXd back = layer.weight.transpose() * delta;
            delta = back.cwiseProduct((act[l].array() > 0.0).cast<double>().matrix());
        }
    }
    return g;
}

struct AdamState {
    double learning_rate = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
    std::uint64_t step = 0;
    MlpParams first;   // first moment
    MlpParams second;  // second moment

    static AdamState for_params(const MlpParams& p, double lr = 1e-3) {
        AdamState s;
        s.learning_rate = lr;
        s.first = MlpParams::zeros(p.sizes());
        s.second = MlpParams::zeros(p.sizes());
        return s;
    }
};

/// Bias-corrected Adam update, in place.
inline void adam_step(MlpParams& params, const MlpParams& grads, AdamState& state) {
    if (params.sizes() != grads.sizes() || params.sizes() != state.first.sizes())
        throw std::invalid_argument("adam_step: shape mismatch");
    ++state.step;
    const double t = static_cast<double>(state.step);
    const double c1 = 1.0 - std::pow(state.beta1, t);
    const double c2 = 1.0 - std::pow(state.beta2, t);
    const auto update = [&](auto& w, const auto& g, auto& m, auto& v) {
        m = state.beta1 * m + (1.0 - state.beta1) * g;
        v = state.beta2 * v + (1.0 - state.beta2) * g.cwiseProduct(g);
        w.array() -= state.learning_rate * (m.array() / c1) / ((v.array() / c2).sqrt() + state.epsilon);
    };
    for (std::size_t l = 0; l < params.layers.size(); ++l) {
        update(params.layers[l].weight, grads.layers[l].weight, state.first.layers[l].weight, state.second.layers[l].weight);
        update(params.layers[l].bias, grads.layers[l].bias, state.first.layers[l].bias, state.second.layers[l].bias);
    }
}

class TrainingError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct TrainConfig {
    int max_epochs = 500;
    std::size_t batch_size = 100;
    int patience = 50;
    double learning_rate = 1e-3;
    std::vector<std::size_t> hidden{128, 64, 32};
    std::uint64_t seed = 1;

    void validate() const {
        if (max_epochs < 1 || batch_size < 1 || patience < 1) throw std::invalid_argument("TrainConfig: non-positive setting");
        if (!(learning_rate > 0.0)) throw std::invalid_argument("TrainConfig: learning rate must be positive");
    }
};

struct TrainHistory {
    std::vector<double> train_mse;
    std::vector<double> val_mse;
    int best_epoch = 0;  // 1-based
    bool stopped_early = false;

    std::size_t epochs() const { return val_mse.size(); }
};

/// Patience bookkeeping. The best epoch is the earliest one reaching the
/// minimum validation loss; training stops once `patience` further epochs
/// pass without a strict improvement.
class EarlyStopping {
public:
    explicit EarlyStopping(int patience) : patience_(patience) {}

    /// Records the loss of the next epoch; returns true if training should stop.
    bool update(double val_loss) {
        ++epoch_;
        if (val_loss < best_loss_) {
            best_loss_ = val_loss;
            best_epoch_ = epoch_;
            improved_ = true;
        } else {
            improved_ = false;
        }
        return epoch_ - best_epoch_ >= patience_;
    }

    bool improved() const { return improved_; }
    int best_epoch() const { return best_epoch_; }
    double best_loss() const { return best_loss_; }

private:
    int patience_;
    int epoch_ = 0;
    int best_epoch_ = 0;
    double best_loss_ = std::numeric_limits<double>::infinity();
    bool improved_ = false;
};

namespace detail {
inline Eigen::MatrixXd input_matrix(const Dataset& ds, std::span<const std::size_t> idx) {
    Eigen::MatrixXd x(static_cast<Eigen::Index>(ds.input_dim), static_cast<Eigen::Index>(idx.size()));
    for (std::size_t c = 0; c < idx.size(); ++c) {
        const auto row = ds.input(idx[c]);
        for (std::size_t j = 0; j < ds.input_dim; ++j) x(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(c)) = row[j];
    }
    return x;
}

inline Eigen::MatrixXd target_matrix(const Dataset& ds, std::span<const std::size_t> idx) {
    Eigen::MatrixXd y(5, static_cast<Eigen::Index>(idx.size()));
    for (std::size_t c = 0; c < idx.size(); ++c)
        for (std::size_t j = 0; j < 5; ++j) y(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(c)) = ds.targets[idx[c]][j];
    return y;
}

inline std::vector<std::size_t> all_indices(std::size_t n) {
    std::vector<std::size_t> idx(n);
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    return idx;
}
}  // namespace detail

/// Per-output mean squared error over a dataset.
inline std::array<double, 5> per_parameter_mse(const MlpParams& params, const Dataset& ds) {
    if (ds.size() == 0) throw std::invalid_argument("per_parameter_mse: empty dataset");
    const auto idx = detail::all_indices(ds.size());
    const Eigen::MatrixXd diff = mlp_forward_batch(params, detail::input_matrix(ds, idx)) - detail::target_matrix(ds, idx);
    std::array<double, 5> out{};
    for (int j = 0; j < 5; ++j) out[static_cast<std::size_t>(j)] = diff.row(j).squaredNorm() / static_cast<double>(ds.size());
    return out;
}

inline double dataset_mse(const MlpParams& params, const Dataset& ds) {
    const auto per = per_parameter_mse(params, ds);
    return std::accumulate(per.begin(), per.end(), 0.0) / 5.0;
}

/// Per-coefficient population variance of the targets: the MSE of always
/// predicting the mean.
inline std::array<double, 5> target_variance(const Dataset& ds) {
    std::array<double, 5> mean{}, var{};
    for (const auto& t : ds.targets)
        for (std::size_t j = 0; j < 5; ++j) mean[j] += t[j];
    for (auto& m : mean) m /= static_cast<double>(ds.size());
    for (const auto& t : ds.targets)
        for (std::size_t j = 0; j < 5; ++j) var[j] += (t[j] - mean[j]) * (t[j] - mean[j]);
    for (auto& v : var) v /= static_cast<double>(ds.size());
    return var;
}

/// Per-coefficient MSE on `test` of always predicting the mean of `train`.
inline std::array<double, 5> mean_baseline_mse(const Dataset& train, const Dataset& test) {
    if (train.size() == 0 || test.size() == 0) throw std::invalid_argument("mean_baseline_mse: empty dataset");
    std::array<double, 5> mean{}, mse{};
    for (const auto& t : train.targets)
        for (std::size_t j = 0; j < 5; ++j) mean[j] += t[j];
    for (auto& m : mean) m /= static_cast<double>(train.size());
    for (const auto& t : test.targets)
        for (std::size_t j = 0; j < 5; ++j) mse[j] += (t[j] - mean[j]) * (t[j] - mean[j]);
    for (auto& v : mse) v /= static_cast<double>(test.size());
    return mse;
}

struct TrainResult {
    MlpParams params;  // snapshot at the best validation epoch
    TrainHistory history;
};

/// Mini-batch Adam on already-normalized partitions.
inline TrainResult train(const Dataset& train_set, const Dataset& val_set, const TrainConfig& config) {
    config.validate();
    if (train_set.size() == 0 || val_set.size() == 0) throw std::invalid_argument("train: empty partition");
    if (train_set.input_dim != val_set.input_dim) throw std::invalid_argument("train: partition dimensions differ");

    std::vector<std::size_t> sizes{train_set.input_dim};
    sizes.insert(sizes.end(), config.hidden.begin(), config.hidden.end());
    sizes.push_back(5);

    Rng init_rng = substream(config.seed, 0, 0x1417);
    Rng shuffle_rng = substream(config.seed, 1, 0x5f1e);
    MlpParams params = MlpParams::he_uniform(sizes, init_rng);
    AdamState adam = AdamState::for_params(params, config.learning_rate);

    const auto val_idx = detail::all_indices(val_set.size());
    const Eigen::MatrixXd val_x = detail::input_matrix(val_set, val_idx);
    const Eigen::MatrixXd val_y = detail::target_matrix(val_set, val_idx);

    TrainResult result{params, {}};
    EarlyStopping stopper(config.patience);
    auto order = detail::all_indices(train_set.size());

    for (int epoch = 1; epoch <= config.max_epochs; ++epoch) {
        for (std::size_t i = order.size() - 1; i > 0; --i) std::swap(order[i], order[uniform_index(shuffle_rng, i + 1)]);

        double loss_sum = 0.0;
        for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
            const std::size_t len = std::min(config.batch_size, order.size() - start);
            std::span<const std::size_t> batch(order.data() + start, len);
            const auto g = mlp_backward(params, detail::input_matrix(train_set, batch), detail::target_matrix(train_set, batch));
            loss_sum += g.loss * static_cast<double>(len);
            adam_step(params, g.grads, adam);
        }
        if (!params.finite()) throw TrainingError("train: parameters diverged");

        const double val = (mlp_forward_batch(params, val_x) - val_y).squaredNorm() / static_cast<double>(val_y.size());
        result.history.train_mse.push_back(loss_sum / static_cast<double>(order.size()));
        result.history.val_mse.push_back(val);
        const bool stop = stopper.update(val);
        if (stopper.improved()) result.params = params;
        if (stop) {
            result.history.stopped_early = epoch < config.max_epochs;
            break;
        }
    }
    result.history.best_epoch = stopper.best_epoch();
    return result;
}

/// Trained regressor plus the scaler fitted on its training partition.
struct SurfaceModel {
    MlpParams params;
    MinMaxScaler scaler;
    std::uint32_t dataset_flags = 0;  // feature layout of the training data

    SurfaceCoeffs predict(std::span<const double> raw) const {
        if (raw.size() != scaler.dim() || raw.size() != params.input_dim())
            throw std::invalid_argument("predict: input dimension does not match the model");
        const auto y = mlp_forward(params, scaler.transform(raw));
        return {y[0], y[1], y[2], y[3], y[4]};
    }
};

inline SurfaceCoeffs predict(const MlpParams& params, const MinMaxScaler& scaler, std::span<const double> raw) {
    return SurfaceModel{params, scaler, 0}.predict(raw);
}

// File layout: "FRNN", u32 version, u32 dataset flags, u32 count of layer sizes, u32 sizes...,
// scaler min[D] max[D], then per layer W (row-major, out x in) and b; all f64.
inline constexpr std::uint32_t model_version = 1;

inline void write_model(std::ostream& os, const SurfaceModel& m) {
    const auto sizes = m.params.sizes();
    if (m.scaler.dim() != m.params.input_dim()) throw std::invalid_argument("write_model: scaler/model dimension mismatch");
    io::write_magic(os, "FRNN", 4);
    io::write_le<std::uint32_t>(os, model_version);
    io::write_le<std::uint32_t>(os, m.dataset_flags);
    io::write_le<std::uint32_t>(os, static_cast<std::uint32_t>(sizes.size()));
    for (auto s : sizes) io::write_le<std::uint32_t>(os, static_cast<std::uint32_t>(s));
    write_scaler(os, m.scaler);
    for (const auto& l : m.params.layers) {
        for (Eigen::Index r = 0; r < l.weight.rows(); ++r)
            for (Eigen::Index c = 0; c < l.weight.cols(); ++c) io::write_le(os, l.weight(r, c));
        for (Eigen::Index r = 0; r < l.bias.size(); ++r) io::write_le(os, l.bias(r));
    }
}

inline SurfaceModel read_model(std::istream& is) {
    io::expect_magic(is, "FRNN", 4);
    if (io::read_le<std::uint32_t>(is) != model_version) throw FormatError("model: unsupported version");
    const auto flags = io::read_le<std::uint32_t>(is);
    if (flags > 0xF) throw FormatError("model: unknown dataset flags");
    const auto count = io::read_le<std::uint32_t>(is);
    if (count < 2 || count > 64) throw FormatError("model: implausible layer count");
    std::vector<std::size_t> sizes(count);
    for (auto& s : sizes) {
        s = io::read_le<std::uint32_t>(is);
        if (s == 0 || s > (1u << 20)) throw FormatError("model: implausible layer size");
    }
    SurfaceModel m;
    m.dataset_flags = flags;
    m.scaler = read_scaler(is, sizes.front());
    m.params = MlpParams::zeros(sizes);
    for (auto& l : m.params.layers) {
        for (Eigen::Index r = 0; r < l.weight.rows(); ++r)
            for (Eigen::Index c = 0; c < l.weight.cols(); ++c) l.weight(r, c) = io::read_le<double>(is);
        for (Eigen::Index r = 0; r < l.bias.size(); ++r) l.bias(r) = io::read_le<double>(is);
    }
    if (!m.params.finite()) throw FormatError("model: non-finite parameters");
    return m;
}

inline void save_model(const std::filesystem::path& path, const SurfaceModel& m) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw std::runtime_error("cannot open " + path.string() + " for writing");
    write_model(os, m);
}

inline SurfaceModel load_model(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw FormatError("cannot open " + path.string());
    return read_model(is);
}

/// Full pipeline on a raw dataset: split, fit the scaler on the training
/// partition, normalize every partition, train.
struct PipelineResult {
    SurfaceModel model;
    TrainHistory history;
    Partition normalized;  // partitions after scaling
};

inline PipelineResult fit_pipeline(const Dataset& raw, const TrainConfig& config, std::uint64_t split_seed) {
    const Partition parts = split(raw, split_seed);
    const MinMaxScaler scaler = MinMaxScaler::fit(parts.train);
    Partition norm{scaler.apply(parts.train), scaler.apply(parts.validation), scaler.apply(parts.test)};
    auto trained = train(norm.train, norm.validation, config);
    return {{std::move(trained.params), scaler, raw.flags}, std::move(trained.history), std::move(norm)};
}

}  // namespace flexris
