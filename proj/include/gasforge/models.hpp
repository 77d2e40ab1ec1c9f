#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <numeric>
#include <random>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <utility>
#include <variant>
#include <vector>

#include "gasforge/csv.hpp"
#include "gasforge/errors.hpp"
#include "gasforge/util.hpp"

namespace gasforge {

// Interpretable forecasters trained from scratch: ordinary least squares,
// a small MLP, and a neural additive model whose prediction decomposes
// exactly into per-feature contributions. All trainers are pure functions
// of (data, config.seed): initialization and batch order derive from the
// raw mt19937_64 stream, never from distribution adapters.

// ------------------------------ data matrix ------------------------------

struct Matrix {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<double> data;  // row-major

    Matrix() = default;
    Matrix(std::size_t r, std::size_t c) : rows(r), cols(c), data(r * c, 0.0) {}

    double& at(std::size_t r, std::size_t c) { return data[r * cols + c]; }
    double at(std::size_t r, std::size_t c) const { return data[r * cols + c]; }
    std::span<const double> row(std::size_t r) const {
        return {data.data() + r * cols, cols};
    }
};

// Uniform draw of `count` rows (with replacement) from X.
inline Matrix sample_rows(const Matrix& x, std::size_t count, std::uint64_t seed) {
    if (x.rows == 0) throw ValidationError("cannot sample rows from an empty matrix");
    std::mt19937_64 rng(seed);
    Matrix out(count, x.cols);
    for (std::size_t i = 0; i < count; ++i) {
        const auto r = static_cast<std::size_t>(bounded_rand(rng, x.rows));
        std::copy_n(x.data.data() + r * x.cols, x.cols, out.data.data() + i * x.cols);
    }
    return out;
}

// ------------------------------ metrics ------------------------------

inline double mse(std::span<const double> predicted, std::span<const double> actual) {
    if (predicted.size() != actual.size())
        throw ValidationError("mse requires equal-length vectors");
    if (predicted.empty()) throw ValidationError("mse of empty vectors");
    double total = 0.0;
    for (std::size_t i = 0; i < predicted.size(); ++i) {
        const double e = predicted[i] - actual[i];
        total += e * e;
    }
    return total / static_cast<double>(predicted.size());
}

inline double variance(std::span<const double> values) {
    if (values.empty()) throw ValidationError("variance of an empty vector");
    const double mean =
        std::accumulate(values.begin(), values.end(), 0.0) /
        static_cast<double>(values.size());
    double total = 0.0;
    for (double v : values) total += (v - mean) * (v - mean);
    return total / static_cast<double>(values.size());
}

// ------------------------------ activations ------------------------------

enum class Activation { tanh_unit, sigmoid, softplus };

inline std::string_view to_string(Activation a) {
    switch (a) {
        case Activation::tanh_unit: return "tanh";
        case Activation::sigmoid: return "sigmoid";
        case Activation::softplus: return "softplus";
    }
    throw ValidationError("unknown activation");
}

inline Activation activation_from_string(std::string_view name) {
    if (name == "tanh") return Activation::tanh_unit;
    if (name == "sigmoid") return Activation::sigmoid;
    if (name == "softplus") return Activation::softplus;
    throw ValidationError("unknown activation '" + std::string(name) +
                          "' (expected tanh, sigmoid, or softplus)");
}

inline double activate(Activation a, double z) {
    switch (a) {
        case Activation::tanh_unit: return std::tanh(z);
        case Activation::sigmoid: return 1.0 / (1.0 + std::exp(-z));
        case Activation::softplus: return z > 30.0 ? z : std::log1p(std::exp(z));
    }
    throw ValidationError("unknown activation");
}

// Derivative in terms of pre-activation z and output a = activate(z).
inline double activate_deriv(Activation act, double z, double a) {
    switch (act) {
        case Activation::tanh_unit: return 1.0 - a * a;
        case Activation::sigmoid: return a * (1.0 - a);
        case Activation::softplus: return 1.0 / (1.0 + std::exp(-z));
    }
    throw ValidationError("unknown activation");
}

// ------------------------------ linear model ------------------------------

struct LinearModel {
    std::vector<double> weights;
    double bias = 0.0;

    std::size_t input_dim() const { return weights.size(); }

    bool operator==(const LinearModel&) const = default;
};

inline double predict_one(const LinearModel& m, std::span<const double> x) {
    if (x.size() != m.weights.size())
        throw ValidationError("feature dimension " + std::to_string(x.size()) +
                              " does not match model input " +
                              std::to_string(m.weights.size()));
    double out = m.bias;
    for (std::size_t i = 0; i < x.size(); ++i) out += m.weights[i] * x[i];
    return out;
}

// Ordinary least squares via the normal equations. A ridge jitter of 1e-10
// is added to the weight diagonal (not the bias) so near-duplicate columns
// stay solvable without biasing the intercept.
inline LinearModel fit_linear(const Matrix& x, std::span<const double> y) {
    if (x.rows != y.size())
        throw ValidationError("row count does not match target length");
    if (x.cols == 0) throw ValidationError("feature matrix has no columns");
    if (x.rows < x.cols + 1)
        throw ValidationError("need at least cols + 1 = " + std::to_string(x.cols + 1) +
                              " rows, got " + std::to_string(x.rows));
    const std::size_t d = x.cols + 1;  // weights then bias
    std::vector<double> g(d * d, 0.0);
    std::vector<double> rhs(d, 0.0);
    std::vector<double> aug(d);
    for (std::size_t r = 0; r < x.rows; ++r) {
        for (std::size_t c = 0; c < x.cols; ++c) aug[c] = x.at(r, c);
        aug[d - 1] = 1.0;
        for (std::size_t i = 0; i < d; ++i) {
            rhs[i] += aug[i] * y[r];
            for (std::size_t j = 0; j <= i; ++j) g[i * d + j] += aug[i] * aug[j];
        }
    }
    for (std::size_t i = 0; i + 1 < d; ++i) g[i * d + i] += 1e-10;

    // Cholesky on the lower triangle of G.
    std::vector<double> l(d * d, 0.0);
    for (std::size_t i = 0; i < d; ++i) {
        for (std::size_t j = 0; j <= i; ++j) {
            double sum = g[i * d + j];
            for (std::size_t k = 0; k < j; ++k) sum -= l[i * d + k] * l[j * d + k];
            if (i == j) {
                if (!(sum > 0.0) || !std::isfinite(sum))
                    throw DomainError(
                        "normal equations are not positive definite; feature "
                        "columns are rank-deficient or ill-conditioned beyond "
                        "the jitter");
                l[i * d + i] = std::sqrt(sum);
            } else {
                l[i * d + j] = sum / l[j * d + j];
            }
        }
    }
    std::vector<double> z(d);
    for (std::size_t i = 0; i < d; ++i) {
        double sum = rhs[i];
        for (std::size_t k = 0; k < i; ++k) sum -= l[i * d + k] * z[k];
        z[i] = sum / l[i * d + i];
    }
    std::vector<double> theta(d);
    for (std::size_t ii = d; ii-- > 0;) {
        double sum = z[ii];
        for (std::size_t k = ii + 1; k < d; ++k) sum -= l[k * d + ii] * theta[k];
        theta[ii] = sum / l[ii * d + ii];
    }
    LinearModel model;
    model.weights.assign(theta.begin(), theta.end() - 1);
    model.bias = theta.back();
    return model;
}

// ------------------------------ MLP ------------------------------

struct MlpLayer {
    std::size_t in = 0;
    std::size_t out = 0;
    std::vector<double> w;  // row-major, out x in
    std::vector<double> b;  // out

    bool operator==(const MlpLayer&) const = default;
};

struct MlpModel {
    std::size_t input_dim = 0;
    Activation activation = Activation::tanh_unit;
    std::vector<MlpLayer> layers;  // final layer has out == 1 and no activation

    bool operator==(const MlpModel&) const = default;
};

// Xavier-style uniform initialization: radius sqrt(6 / (in + out)); biases
// start at zero so the draw order is exactly one uniform per weight.
inline MlpModel init_mlp(std::size_t input_dim, std::span<const std::size_t> hidden,
                         Activation activation, std::mt19937_64& rng) {
    if (input_dim == 0) throw ValidationError("input dimension must be >= 1");
    for (std::size_t h : hidden)
        if (h == 0) throw ValidationError("hidden widths must be >= 1");
    MlpModel m;
    m.input_dim = input_dim;
    m.activation = activation;
    std::vector<std::size_t> dims;
    dims.push_back(input_dim);
    dims.insert(dims.end(), hidden.begin(), hidden.end());
    dims.push_back(1);
    for (std::size_t l = 0; l + 1 < dims.size(); ++l) {
        MlpLayer layer;
        layer.in = dims[l];
        layer.out = dims[l + 1];
        layer.w.resize(layer.in * layer.out);
        layer.b.assign(layer.out, 0.0);
        const double radius =
            std::sqrt(6.0 / static_cast<double>(layer.in + layer.out));
        for (double& w : layer.w) w = uniform_pm(rng, radius);
        m.layers.push_back(std::move(layer));
    }
    return m;
}

struct MlpCache {
    std::vector<std::vector<double>> z;  // pre-activation per layer
    std::vector<std::vector<double>> a;  // post-activation per layer
};

inline double mlp_forward(const MlpModel& m, std::span<const double> x,
                          MlpCache* cache = nullptr) {
    if (x.size() != m.input_dim)
        throw ValidationError("feature dimension " + std::to_string(x.size()) +
                              " does not match model input " +
                              std::to_string(m.input_dim));
    MlpCache local;
    MlpCache& ws = cache != nullptr ? *cache : local;
    ws.z.resize(m.layers.size());
    ws.a.resize(m.layers.size());
    std::span<const double> current = x;
    for (std::size_t l = 0; l < m.layers.size(); ++l) {
        const MlpLayer& layer = m.layers[l];
        const bool last = l + 1 == m.layers.size();
        std::vector<double>& z = ws.z[l];
        std::vector<double>& a = ws.a[l];
        z.resize(layer.out);
        a.resize(layer.out);
        for (std::size_t j = 0; j < layer.out; ++j) {
            double sum = layer.b[j];
            const double* row = layer.w.data() + j * layer.in;
            for (std::size_t i = 0; i < layer.in; ++i) sum += row[i] * current[i];
            z[j] = sum;
            a[j] = last ? sum : activate(m.activation, sum);
        }
        current = a;
    }
    return current[0];
}

// Accumulates dLoss/dparams into grads (same shape as m) given the scalar
// upstream derivative dLoss/doutput for one sample.
inline void mlp_backward(const MlpModel& m, const MlpCache& cache,
                         std::span<const double> x, double dl_dout,
                         MlpModel& grads) {
    std::vector<double> delta{dl_dout};
    for (std::size_t li = m.layers.size(); li-- > 0;) {
        const MlpLayer& layer = m.layers[li];
        MlpLayer& grad = grads.layers[li];
        const std::span<const double> input =
            li == 0 ? x : std::span<const double>(cache.a[li - 1]);
        for (std::size_t j = 0; j < layer.out; ++j) {
            grad.b[j] += delta[j];
            double* wrow = grad.w.data() + j * layer.in;
            for (std::size_t i = 0; i < layer.in; ++i) wrow[i] += delta[j] * input[i];
        }
        if (li == 0) break;
        std::vector<double> next(layer.in, 0.0);
        for (std::size_t j = 0; j < layer.out; ++j) {
            const double* wrow = layer.w.data() + j * layer.in;
            for (std::size_t i = 0; i < layer.in; ++i) next[i] += delta[j] * wrow[i];
        }
        for (std::size_t i = 0; i < layer.in; ++i)
            next[i] *= activate_deriv(m.activation, cache.z[li - 1][i],
                                      cache.a[li - 1][i]);
        delta = std::move(next);
    }
}

inline MlpModel zeros_like(const MlpModel& m) {
    MlpModel g = m;
    for (MlpLayer& layer : g.layers) {
        std::fill(layer.w.begin(), layer.w.end(), 0.0);
        std::fill(layer.b.begin(), layer.b.end(), 0.0);
    }
    return g;
}

inline double predict_one(const MlpModel& m, std::span<const double> x) {
    return mlp_forward(m, x);
}

// ------------------------------ NAM ------------------------------

struct NamModel {
    std::size_t input_dim = 0;
    double bias = 0.0;
    std::vector<MlpModel> subnets;  // one scalar-input network per feature

    bool operator==(const NamModel&) const = default;
};

inline NamModel init_nam(std::size_t input_dim, std::span<const std::size_t> hidden,
                         Activation activation, std::mt19937_64& rng) {
    if (input_dim == 0) throw ValidationError("input dimension must be >= 1");
    NamModel m;
    m.input_dim = input_dim;
    m.subnets.reserve(input_dim);
    for (std::size_t f = 0; f < input_dim; ++f)
        m.subnets.push_back(init_mlp(1, hidden, activation, rng));
    return m;
}

// Per-feature contribution: what subnetwork `feature` adds for this value.
inline double contribution(const NamModel& m, std::size_t feature, double value) {
    if (feature >= m.subnets.size())
        throw ValidationError("feature index out of range");
    const double x[1] = {value};
    return mlp_forward(m.subnets[feature], x);
}

inline double predict_one(const NamModel& m, std::span<const double> x) {
    if (x.size() != m.input_dim)
        throw ValidationError("feature dimension " + std::to_string(x.size()) +
                              " does not match model input " +
                              std::to_string(m.input_dim));
    double out = m.bias;
    for (std::size_t f = 0; f < m.input_dim; ++f) out += contribution(m, f, x[f]);
    return out;
}

// ------------------------------ shared predict ------------------------------

using Model = std::variant<LinearModel, MlpModel, NamModel>;

inline std::size_t model_input_dim(const Model& m) {
    return std::visit(
        [](const auto& inner) -> std::size_t {
            using T = std::decay_t<decltype(inner)>;
            if constexpr (std::is_same_v<T, LinearModel>)
                return inner.weights.size();
            else
                return inner.input_dim;
        },
        m);
}

inline double predict_one(const Model& m, std::span<const double> x) {
    return std::visit([&](const auto& inner) { return predict_one(inner, x); }, m);
}

inline std::vector<double> predict(const Model& m, const Matrix& x) {
    std::vector<double> out;
    out.reserve(x.rows);
    for (std::size_t r = 0; r < x.rows; ++r) out.push_back(predict_one(m, x.row(r)));
    return out;
}

// ------------------------------ training ------------------------------

struct TrainConfig {
    double learning_rate = 1e-3;
    std::size_t epochs = 200;
    std::uint64_t seed = 0;
    double lambda = 10.0;          // monotonicity penalty weight
    std::size_t grid_points = 101; // audit grid resolution on [0, 1]
    double step_c = 0.01;          // audit perturbation step
    std::size_t batch_size = 32;
    std::vector<std::size_t> hidden_widths{32, 32};
    Activation activation = Activation::tanh_unit;
    std::size_t audit_contexts = 64;

    void validate() const {
        if (!(learning_rate > 0.0))
            throw ValidationError("learning_rate must be positive");
        if (grid_points < 2) throw ValidationError("grid_points must be >= 2");
        if (!(step_c > 0.0)) throw ValidationError("step_c must be positive");
        if (!(lambda >= 0.0)) throw ValidationError("lambda must be >= 0");
        if (batch_size == 0) throw ValidationError("batch_size must be >= 1");
        if (audit_contexts == 0) throw ValidationError("audit_contexts must be >= 1");
        for (std::size_t h : hidden_widths)
            if (h == 0) throw ValidationError("hidden widths must be >= 1");
    }
};

struct TrainHistory {
    std::vector<double> epoch_mse;
    std::vector<double> epoch_violation;  // filled by the constrained trainer
};

namespace detail {

inline void check_training_inputs(const Matrix& x, std::span<const double> y,
                                  const TrainConfig& config) {
    config.validate();
    if (x.rows != y.size())
        throw ValidationError("row count does not match target length");
    if (x.rows == 0) throw ValidationError("cannot train on an empty matrix");
    if (x.cols == 0) throw ValidationError("feature matrix has no columns");
}

// One epoch of mini-batch gradient descent on mean squared error.
// forward(sample, cache) and backward(sample, dl_dout) let the caller plug
// in either a plain MLP or a NAM; apply(scale) commits the accumulated
// gradient. Returns the mean per-sample squared error observed during the
// pass (each batch measured before its update).
template <typename ForwardFn, typename BackwardFn, typename ApplyFn>
double run_epoch(std::span<const double> y, const TrainConfig& config,
                 std::vector<std::size_t>& order,
                 std::mt19937_64& rng, ForwardFn&& forward, BackwardFn&& backward,
                 ApplyFn&& apply) {
    deterministic_shuffle(order, rng);
    double loss_total = 0.0;
    for (std::size_t begin = 0; begin < order.size(); begin += config.batch_size) {
        const std::size_t end = std::min(order.size(), begin + config.batch_size);
        const auto batch_n = static_cast<double>(end - begin);
        for (std::size_t i = begin; i < end; ++i) {
            const std::size_t r = order[i];
            const double out = forward(r);
            const double err = out - y[r];
            loss_total += err * err;
            backward(r, 2.0 * err / batch_n);
        }
        apply();
    }
    return loss_total / static_cast<double>(order.size());
}

inline void check_divergence(double epoch_loss, std::size_t epoch) {
    if (std::isnan(epoch_loss) || std::isinf(epoch_loss))
        throw DomainError("training diverged at epoch " + std::to_string(epoch));
}

}  // namespace detail

struct MlpFit {
    MlpModel model;
    TrainHistory history;
};

inline MlpFit fit_mlp(const Matrix& x, std::span<const double> y,
                      const TrainConfig& config) {
    detail::check_training_inputs(x, y, config);
    std::mt19937_64 rng(config.seed);
    MlpFit fit;
    fit.model = init_mlp(x.cols, config.hidden_widths, config.activation, rng);
    MlpModel grads = zeros_like(fit.model);
    MlpCache cache;
    std::vector<std::size_t> order(x.rows);
    std::iota(order.begin(), order.end(), 0);
    for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
        const double loss = detail::run_epoch(
            y, config, order, rng,
            [&](std::size_t r) { return mlp_forward(fit.model, x.row(r), &cache); },
            [&](std::size_t r, double dl) {
                mlp_backward(fit.model, cache, x.row(r), dl, grads);
            },
            [&] {
                for (std::size_t l = 0; l < fit.model.layers.size(); ++l) {
                    MlpLayer& layer = fit.model.layers[l];
                    MlpLayer& g = grads.layers[l];
                    for (std::size_t i = 0; i < layer.w.size(); ++i) {
                        layer.w[i] -= config.learning_rate * g.w[i];
                        g.w[i] = 0.0;
                    }
                    for (std::size_t i = 0; i < layer.b.size(); ++i) {
                        layer.b[i] -= config.learning_rate * g.b[i];
                        g.b[i] = 0.0;
                    }
                }
            });
        detail::check_divergence(loss, epoch);
        fit.history.epoch_mse.push_back(loss);
    }
    return fit;
}

struct NamFit {
    NamModel model;
    TrainHistory history;
};

namespace detail {

struct NamWorkspace {
    NamModel grads;
    std::vector<MlpCache> caches;  // one per subnet
    double bias_grad = 0.0;

    explicit NamWorkspace(const NamModel& m) : caches(m.subnets.size()) {
        grads = m;
        for (MlpModel& s : grads.subnets)
            for (MlpLayer& layer : s.layers) {
                std::fill(layer.w.begin(), layer.w.end(), 0.0);
                std::fill(layer.b.begin(), layer.b.end(), 0.0);
            }
        grads.bias = 0.0;
    }
};

inline double nam_forward_cached(const NamModel& m, std::span<const double> x,
                                 NamWorkspace& ws) {
    double out = m.bias;
    for (std::size_t f = 0; f < m.input_dim; ++f) {
        const double xi[1] = {x[f]};
        out += mlp_forward(m.subnets[f], xi, &ws.caches[f]);
    }
    return out;
}

inline void nam_backward_cached(const NamModel& m, std::span<const double> x,
                                double dl_dout, NamWorkspace& ws) {
    ws.bias_grad += dl_dout;
    for (std::size_t f = 0; f < m.input_dim; ++f) {
        const double xi[1] = {x[f]};
        mlp_backward(m.subnets[f], ws.caches[f], xi, dl_dout, ws.grads.subnets[f]);
    }
}

inline void nam_apply(NamModel& m, NamWorkspace& ws, double lr) {
    m.bias -= lr * ws.bias_grad;
    ws.bias_grad = 0.0;
    for (std::size_t f = 0; f < m.subnets.size(); ++f) {
        MlpModel& subnet = m.subnets[f];
        MlpModel& g = ws.grads.subnets[f];
        for (std::size_t l = 0; l < subnet.layers.size(); ++l) {
            MlpLayer& layer = subnet.layers[l];
            MlpLayer& gl = g.layers[l];
            for (std::size_t i = 0; i < layer.w.size(); ++i) {
                layer.w[i] -= lr * gl.w[i];
                gl.w[i] = 0.0;
            }
            for (std::size_t i = 0; i < layer.b.size(); ++i) {
                layer.b[i] -= lr * gl.b[i];
                gl.b[i] = 0.0;
            }
        }
    }
}

}  // namespace detail

inline NamFit fit_nam(const Matrix& x, std::span<const double> y,
                      const TrainConfig& config) {
    detail::check_training_inputs(x, y, config);
    std::mt19937_64 rng(config.seed);
    NamFit fit;
    fit.model = init_nam(x.cols, config.hidden_widths, config.activation, rng);
    detail::NamWorkspace ws(fit.model);
    std::vector<std::size_t> order(x.rows);
    std::iota(order.begin(), order.end(), 0);
    for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
        const double loss = detail::run_epoch(
            y, config, order, rng,
            [&](std::size_t r) {
                return detail::nam_forward_cached(fit.model, x.row(r), ws);
            },
            [&](std::size_t r, double dl) {
                detail::nam_backward_cached(fit.model, x.row(r), dl, ws);
            },
            [&] { detail::nam_apply(fit.model, ws, config.learning_rate); });
        detail::check_divergence(loss, epoch);
        fit.history.epoch_mse.push_back(loss);
    }
    return fit;
}

// ------------------------------ monotonicity ------------------------------

// Weak pairwise importance: moving the more recent α lag (important_index)
// by c must move the prediction at least as much as the same move on the
// older lag (lesser_index), with both lags pinned to the same grid value.
struct MonotonicityConstraint {
    std::size_t important_index = 0;
    std::size_t lesser_index = 0;
};

inline void validate_constraint(const MonotonicityConstraint& c, std::size_t dim) {
    if (c.important_index == c.lesser_index)
        throw ValidationError("constraint indices must be distinct");
    if (c.important_index >= dim || c.lesser_index >= dim)
        throw ValidationError("constraint index out of range");
}

struct ViolationSample {
    double grid_point = 0.0;
    std::size_t context_id = 0;
    double delta_beta = 0.0;   // |f(important + c) - f|
    double delta_gamma = 0.0;  // |f(lesser + c) - f|
    double violation = 0.0;    // max(0, delta_gamma - delta_beta)
};

// Full audit detail for one constraint: every grid point crossed with
// every context row.
inline std::vector<ViolationSample> violation_samples(
    const Model& model, const MonotonicityConstraint& constraint,
    std::size_t grid_points, double step_c, const Matrix& contexts) {
    if (grid_points < 2) throw ValidationError("grid_points must be >= 2");
    if (!(step_c > 0.0)) throw ValidationError("step_c must be positive");
    validate_constraint(constraint, contexts.cols);
    if (model_input_dim(model) != contexts.cols)
        throw ValidationError("context dimension does not match model input");
    if (contexts.rows == 0) throw ValidationError("context sample is empty");
    std::vector<ViolationSample> samples;
    samples.reserve(grid_points * contexts.rows);
    std::vector<double> point(contexts.cols);
    for (std::size_t gi = 0; gi < grid_points; ++gi) {
        const double a = static_cast<double>(gi) / static_cast<double>(grid_points - 1);
        for (std::size_t ci = 0; ci < contexts.rows; ++ci) {
            const auto row = contexts.row(ci);
            std::copy(row.begin(), row.end(), point.begin());
            point[constraint.important_index] = a;
            point[constraint.lesser_index] = a;
            const double f0 = predict_one(model, point);
            point[constraint.lesser_index] = a + step_c;
            const double f_lesser = predict_one(model, point);
            point[constraint.lesser_index] = a;
            point[constraint.important_index] = a + step_c;
            const double f_important = predict_one(model, point);
            ViolationSample s;
            s.grid_point = a;
            s.context_id = ci;
            s.delta_beta = std::fabs(f_important - f0);
            s.delta_gamma = std::fabs(f_lesser - f0);
            s.violation = std::max(0.0, s.delta_gamma - s.delta_beta);
            samples.push_back(s);
        }
    }
    return samples;
}

inline double monotonic_violation(const Model& model,
                                  const MonotonicityConstraint& constraint,
                                  std::size_t grid_points, double step_c,
                                  const Matrix& contexts) {
    double total = 0.0;
    for (const ViolationSample& s :
         violation_samples(model, constraint, grid_points, step_c, contexts))
        total += s.violation;
    return total;
}

inline double monotonic_violation(const Model& model,
                                  std::span<const MonotonicityConstraint> constraints,
                                  std::size_t grid_points, double step_c,
                                  const Matrix& contexts) {
    double total = 0.0;
    for (const MonotonicityConstraint& c : constraints)
        total += monotonic_violation(model, c, grid_points, step_c, contexts);
    return total;
}

inline void write_violation_report(const Model& model,
                                   const MonotonicityConstraint& constraint,
                                   std::size_t grid_points, double step_c,
                                   const Matrix& contexts,
                                   const std::filesystem::path& path) {
    std::ofstream os(path);
    if (!os) throw IoError("cannot open '" + path.string() + "' for writing");
    os << "grid_point,context_id,delta_beta,delta_gamma,violation\n";
    for (const ViolationSample& s :
         violation_samples(model, constraint, grid_points, step_c, contexts)) {
        os << format_double(s.grid_point) << ',' << s.context_id << ','
           << format_double(s.delta_beta) << ',' << format_double(s.delta_gamma) << ','
           << format_double(s.violation) << '\n';
    }
    if (!os) throw IoError("write to '" + path.string() + "' failed");
}

// ------------------------------ constrained NAM ------------------------------

struct MonotonicNamFit {
    NamModel model;
    TrainHistory history;        // step-1 losses, then one entry per step-2 epoch
    double final_violation = 0.0;
    bool zero_violation = false;
    std::size_t step2_epochs = 0;
};

namespace detail {

// Hinge margin trained into the penalty so the exact (margin-free) audit
// lands at zero instead of hovering at the boundary.
inline constexpr double kMonotonicMargin = 1e-5;

// Because a NAM is additive, the prediction difference from perturbing one
// coordinate collapses to that coordinate's subnetwork alone; the penalty
// is therefore independent of the context rows and can be evaluated on the
// grid only. Returns the mean hinge and accumulates its gradient.
inline double nam_penalty_pass(const NamModel& model,
                               std::span<const MonotonicityConstraint> constraints,
                               std::size_t grid_points, double step_c,
                               NamWorkspace& ws, double weight) {
    double hinge_total = 0.0;
    const auto terms =
        static_cast<double>(grid_points * std::max<std::size_t>(constraints.size(), 1));
    MlpCache cache_a, cache_b;
    for (const MonotonicityConstraint& c : constraints) {
        const MlpModel& imp_net = model.subnets[c.important_index];
        const MlpModel& old_net = model.subnets[c.lesser_index];
        for (std::size_t gi = 0; gi < grid_points; ++gi) {
            const double a =
                static_cast<double>(gi) / static_cast<double>(grid_points - 1);
            const double xa[1] = {a};
            const double xb[1] = {a + step_c};
            const double imp0 = mlp_forward(imp_net, xa, &cache_a);
            const double imp1 = mlp_forward(imp_net, xb, &cache_b);
            const double delta_imp = imp1 - imp0;
            MlpCache les_cache_a, les_cache_b;
            const double les0 = mlp_forward(old_net, xa, &les_cache_a);
            const double les1 = mlp_forward(old_net, xb, &les_cache_b);
            const double delta_les = les1 - les0;
            const double hinge =
                std::fabs(delta_les) - std::fabs(delta_imp) + kMonotonicMargin;
            if (hinge <= 0.0) continue;
            hinge_total += hinge;
            const double scale = weight / terms;
            const double sign_les = delta_les >= 0.0 ? 1.0 : -1.0;
            const double sign_imp = delta_imp >= 0.0 ? 1.0 : -1.0;
            mlp_backward(old_net, les_cache_b, xb, scale * sign_les,
                         ws.grads.subnets[c.lesser_index]);
            mlp_backward(old_net, les_cache_a, xa, -scale * sign_les,
                         ws.grads.subnets[c.lesser_index]);
            mlp_backward(imp_net, cache_b, xb, -scale * sign_imp,
                         ws.grads.subnets[c.important_index]);
            mlp_backward(imp_net, cache_a, xa, scale * sign_imp,
                         ws.grads.subnets[c.important_index]);
        }
    }
    return hinge_total / terms;
}

}  // namespace detail

// Two-step constrained training: fit an unconstrained NAM, then keep
// training on MSE + lambda * hinge penalty until the exact audit reports
// zero violation or the epoch budget runs out. Budget exhaustion is
// reported in the result, not thrown.
inline MonotonicNamFit fit_nam_monotonic(
    const Matrix& x, std::span<const double> y, const TrainConfig& config,
    std::span<const MonotonicityConstraint> constraints) {
    detail::check_training_inputs(x, y, config);
    for (const MonotonicityConstraint& c : constraints)
        validate_constraint(c, x.cols);

    NamFit base = fit_nam(x, y, config);
    MonotonicNamFit fit;
    fit.model = std::move(base.model);
    fit.history = std::move(base.history);

    const Matrix contexts =
        sample_rows(x, config.audit_contexts, config.seed ^ 0x9e3779b97f4a7c15ULL);
    auto audit = [&] {
        return monotonic_violation(Model(fit.model), constraints, config.grid_points,
                                   config.step_c, contexts);
    };
    if (constraints.empty() || config.lambda == 0.0) {
        fit.final_violation = constraints.empty() ? 0.0 : audit();
        fit.zero_violation = fit.final_violation == 0.0;
        return fit;
    }

    std::mt19937_64 rng(config.seed ^ 0xd1b54a32d192ed03ULL);
    std::vector<std::size_t> order(x.rows);
    std::iota(order.begin(), order.end(), 0);
    detail::NamWorkspace ws(fit.model);
    double violation = audit();
    while (fit.step2_epochs < config.epochs && violation > 0.0) {
        const double loss = detail::run_epoch(
            y, config, order, rng,
            [&](std::size_t r) {
                return detail::nam_forward_cached(fit.model, x.row(r), ws);
            },
            [&](std::size_t r, double dl) {
                detail::nam_backward_cached(fit.model, x.row(r), dl, ws);
            },
            [&] {
                detail::nam_penalty_pass(fit.model, constraints, config.grid_points,
                                         config.step_c, ws, config.lambda);
                detail::nam_apply(fit.model, ws, config.learning_rate);
            });
        detail::check_divergence(loss, fit.step2_epochs);
        ++fit.step2_epochs;
        violation = audit();
        fit.history.epoch_mse.push_back(loss);
        fit.history.epoch_violation.push_back(violation);
    }
    fit.final_violation = violation;
    fit.zero_violation = violation == 0.0;
    return fit;
}

// ------------------------------ gradient check ------------------------------

namespace detail {

inline std::vector<double*> parameter_pointers(MlpModel& m) {
    std::vector<double*> out;
    for (MlpLayer& layer : m.layers) {
        for (double& w : layer.w) out.push_back(&w);
        for (double& b : layer.b) out.push_back(&b);
    }
    return out;
}

inline std::vector<double*> parameter_pointers(Model& m) {
    return std::visit(
        [](auto& inner) -> std::vector<double*> {
            using T = std::decay_t<decltype(inner)>;
            if constexpr (std::is_same_v<T, LinearModel>) {
                std::vector<double*> out;
                for (double& w : inner.weights) out.push_back(&w);
                out.push_back(&inner.bias);
                return out;
            } else if constexpr (std::is_same_v<T, MlpModel>) {
                return parameter_pointers(inner);
            } else {
                std::vector<double*> out;
                out.push_back(&inner.bias);
                for (MlpModel& s : inner.subnets)
                    for (double* p : parameter_pointers(s)) out.push_back(p);
                return out;
            }
        },
        m);
}

}  // namespace detail

inline double mse_loss(const Model& m, const Matrix& x, std::span<const double> y) {
    return mse(predict(m, x), y);
}

// Analytic gradient of mean squared error, flattened in the same order as
// detail::parameter_pointers.
inline std::vector<double> mse_gradient(const Model& model, const Matrix& x,
                                        std::span<const double> y) {
    if (x.rows != y.size())
        throw ValidationError("row count does not match target length");
    if (x.rows == 0) throw ValidationError("cannot differentiate on empty data");
    const double inv_n = 1.0 / static_cast<double>(x.rows);
    return std::visit(
        [&](const auto& inner) -> std::vector<double> {
            using T = std::decay_t<decltype(inner)>;
            if constexpr (std::is_same_v<T, LinearModel>) {
                std::vector<double> grad(inner.weights.size() + 1, 0.0);
                for (std::size_t r = 0; r < x.rows; ++r) {
                    const double dl = 2.0 * (predict_one(inner, x.row(r)) - y[r]) * inv_n;
                    for (std::size_t c = 0; c < x.cols; ++c) grad[c] += dl * x.at(r, c);
                    grad.back() += dl;
                }
                return grad;
            } else if constexpr (std::is_same_v<T, MlpModel>) {
                MlpModel grads = zeros_like(inner);
                MlpCache cache;
                for (std::size_t r = 0; r < x.rows; ++r) {
                    const double out = mlp_forward(inner, x.row(r), &cache);
                    mlp_backward(inner, cache, x.row(r), 2.0 * (out - y[r]) * inv_n,
                                 grads);
                }
                std::vector<double> flat;
                Model wrapped(std::move(grads));
                for (double* p : detail::parameter_pointers(wrapped))
                    flat.push_back(*p);
                return flat;
            } else {
                detail::NamWorkspace ws(inner);
                for (std::size_t r = 0; r < x.rows; ++r) {
                    const double out = detail::nam_forward_cached(inner, x.row(r), ws);
                    detail::nam_backward_cached(inner, x.row(r),
                                                2.0 * (out - y[r]) * inv_n, ws);
                }
                ws.grads.bias = ws.bias_grad;
                std::vector<double> flat;
                Model wrapped(std::move(ws.grads));
                for (double* p : detail::parameter_pointers(wrapped))
                    flat.push_back(*p);
                return flat;
            }
        },
        model);
}

// Max over parameters of |analytic - central difference| / (|analytic| + 1e-8)
// with h = 1e-5. The oracle side is recomputed from scratch per parameter.
inline double finite_diff_gradcheck(const Model& model, const Matrix& x,
                                    std::span<const double> y) {
    const std::vector<double> analytic = mse_gradient(model, x, y);
    Model probe = model;
    std::vector<double*> params = detail::parameter_pointers(probe);
    if (params.size() != analytic.size())
        throw ValidationError("parameter count mismatch in gradient check");
    constexpr double h = 1e-5;
    double worst = 0.0;
    for (std::size_t i = 0; i < params.size(); ++i) {
        const double saved = *params[i];
        *params[i] = saved + h;
        const double up = mse_loss(probe, x, y);
        *params[i] = saved - h;
        const double down = mse_loss(probe, x, y);
        *params[i] = saved;
        const double numeric = (up - down) / (2.0 * h);
        const double rel =
            std::fabs(analytic[i] - numeric) / (std::fabs(analytic[i]) + 1e-8);
        worst = std::max(worst, rel);
    }
    return worst;
}

// ------------------------------ registry ------------------------------

// Extension point for additional model families: register a trainer under
// a new name and the bench layer picks it up by string. Ships with the
// three built-in kinds only.
class ModelRegistry {
  public:
    using TrainerFn =
        std::function<Model(const Matrix&, std::span<const double>, const TrainConfig&)>;

    static ModelRegistry& instance() {
        static ModelRegistry registry;
        return registry;
    }

    void register_trainer(const std::string& name, TrainerFn fn) {
        trainers_[name] = std::move(fn);
    }

    bool contains(const std::string& name) const { return trainers_.count(name) > 0; }

    std::vector<std::string> names() const {
        std::vector<std::string> out;
        for (const auto& [name, fn] : trainers_) out.push_back(name);
        return out;
    }

    Model train(const std::string& name, const Matrix& x, std::span<const double> y,
                const TrainConfig& config) const {
        const auto it = trainers_.find(name);
        if (it == trainers_.end()) {
            std::string known;
            for (const auto& [n, fn] : trainers_) {
                if (!known.empty()) known += ", ";
                known += n;
            }
            throw ValidationError("unknown model kind '" + name +
                                  "' (registered: " + known + ")");
        }
        return it->second(x, y, config);
    }

  private:
    ModelRegistry() {
        trainers_["linear"] = [](const Matrix& x, std::span<const double> y,
                                 const TrainConfig&) {
            return Model(fit_linear(x, y));
        };
        trainers_["mlp"] = [](const Matrix& x, std::span<const double> y,
                              const TrainConfig& c) {
            return Model(fit_mlp(x, y, c).model);
        };
        trainers_["nam"] = [](const Matrix& x, std::span<const double> y,
                              const TrainConfig& c) {
            return Model(fit_nam(x, y, c).model);
        };
    }

    std::map<std::string, TrainerFn> trainers_;
};

// ------------------------------ serialization ------------------------------

// Per-column standardization fitted on training rows; identity when empty.
struct FeatureScaling {
    std::vector<double> mean;
    std::vector<double> stdev;

    bool identity() const { return mean.empty(); }

    void apply(std::span<double> x) const {
        if (identity()) return;
        if (x.size() != mean.size())
            throw ValidationError("scaling dimension does not match feature vector");
        for (std::size_t i = 0; i < x.size(); ++i)
            x[i] = (x[i] - mean[i]) / stdev[i];
    }

    bool operator==(const FeatureScaling&) const = default;
};

// A trained model plus everything needed to apply it to raw windows: the
// input standardization and the dataset shape it was trained on.
struct ModelBundle {
    Model model;
    FeatureScaling scaling;
    std::size_t k = 0;
    bool use_hour_sentiment = false;
    bool use_day_sentiment = false;
};

inline double predict_scaled(const ModelBundle& bundle, std::vector<double> features) {
    bundle.scaling.apply(features);
    return predict_one(bundle.model, features);
}

namespace detail {

inline void write_mlp_body(std::ostream& os, const MlpModel& m) {
    os << "activation " << to_string(m.activation) << '\n';
    os << "layers " << m.layers.size() << '\n';
    for (const MlpLayer& layer : m.layers) {
        os << "layer " << layer.in << ' ' << layer.out << '\n';
        os << "w";
        for (double v : layer.w) os << ' ' << format_double(v);
        os << '\n' << "b";
        for (double v : layer.b) os << ' ' << format_double(v);
        os << '\n';
    }
}

inline void expect_token(std::istream& is, std::string_view token) {
    std::string word;
    if (!(is >> word) || word != token)
        throw DecodeError("model file: expected '" + std::string(token) + "', got '" +
                          word + "'");
}

template <typename T>
T read_value(std::istream& is, std::string_view what) {
    T value{};
    if (!(is >> value))
        throw DecodeError("model file: cannot read " + std::string(what));
    return value;
}

inline MlpModel read_mlp_body(std::istream& is, std::size_t input_dim) {
    MlpModel m;
    m.input_dim = input_dim;
    expect_token(is, "activation");
    m.activation = activation_from_string(read_value<std::string>(is, "activation"));
    expect_token(is, "layers");
    const auto count = read_value<std::size_t>(is, "layer count");
    std::size_t expected_in = input_dim;
    for (std::size_t l = 0; l < count; ++l) {
        expect_token(is, "layer");
        MlpLayer layer;
        layer.in = read_value<std::size_t>(is, "layer input width");
        layer.out = read_value<std::size_t>(is, "layer output width");
        if (layer.in != expected_in)
            throw DecodeError("model file: inconsistent layer dimensions");
        expect_token(is, "w");
        layer.w.resize(layer.in * layer.out);
        for (double& v : layer.w) v = read_value<double>(is, "weight");
        expect_token(is, "b");
        layer.b.resize(layer.out);
        for (double& v : layer.b) v = read_value<double>(is, "bias");
        expected_in = layer.out;
        m.layers.push_back(std::move(layer));
    }
    if (count == 0 || m.layers.back().out != 1)
        throw DecodeError("model file: network must end in one output");
    for (const MlpLayer& layer : m.layers)
        for (double v : layer.w)
            if (!std::isfinite(v))
                throw DecodeError("model file: non-finite parameter");
    return m;
}

}  // namespace detail

inline void save_model(const ModelBundle& bundle, const std::filesystem::path& path) {
    std::ofstream os(path);
    if (!os) throw IoError("cannot open '" + path.string() + "' for writing");
    const std::size_t inputs = model_input_dim(bundle.model);
    os << "gasforge-model v1\n";
    os << "kind "
       << std::visit(
              [](const auto& m) -> std::string_view {
                  using T = std::decay_t<decltype(m)>;
                  if constexpr (std::is_same_v<T, LinearModel>) return "linear";
                  if constexpr (std::is_same_v<T, MlpModel>) return "mlp";
                  return "nam";
              },
              bundle.model)
       << '\n';
    os << "inputs " << inputs << '\n';
    os << "window " << bundle.k << '\n';
    os << "hour_sentiment " << (bundle.use_hour_sentiment ? 1 : 0) << '\n';
    os << "day_sentiment " << (bundle.use_day_sentiment ? 1 : 0) << '\n';
    os << "scaling " << bundle.scaling.mean.size() << '\n';
    for (std::size_t i = 0; i < bundle.scaling.mean.size(); ++i)
        os << format_double(bundle.scaling.mean[i]) << ' '
           << format_double(bundle.scaling.stdev[i]) << '\n';
    std::visit(
        [&](const auto& m) {
            using T = std::decay_t<decltype(m)>;
            if constexpr (std::is_same_v<T, LinearModel>) {
                os << "bias " << format_double(m.bias) << '\n';
                os << "weights";
                for (double w : m.weights) os << ' ' << format_double(w);
                os << '\n';
            } else if constexpr (std::is_same_v<T, MlpModel>) {
                detail::write_mlp_body(os, m);
            } else {
                os << "bias " << format_double(m.bias) << '\n';
                for (std::size_t f = 0; f < m.subnets.size(); ++f) {
                    os << "subnet " << f << '\n';
                    detail::write_mlp_body(os, m.subnets[f]);
                }
            }
        },
        bundle.model);
    if (!os) throw IoError("write to '" + path.string() + "' failed");
}

inline ModelBundle load_model(const std::filesystem::path& path) {
    std::ifstream is(path);
    if (!is) throw IoError("cannot open '" + path.string() + "'");
    detail::expect_token(is, "gasforge-model");
    const auto version = detail::read_value<std::string>(is, "version");
    if (version != "v1")
        throw DecodeError("unsupported model file version '" + version + "'");
    detail::expect_token(is, "kind");
    const auto kind = detail::read_value<std::string>(is, "kind");
    detail::expect_token(is, "inputs");
    const auto inputs = detail::read_value<std::size_t>(is, "input count");
    if (inputs == 0) throw DecodeError("model file: inputs must be >= 1");
    ModelBundle bundle;
    detail::expect_token(is, "window");
    bundle.k = detail::read_value<std::size_t>(is, "window length");
    detail::expect_token(is, "hour_sentiment");
    bundle.use_hour_sentiment = detail::read_value<int>(is, "hour flag") != 0;
    detail::expect_token(is, "day_sentiment");
    bundle.use_day_sentiment = detail::read_value<int>(is, "day flag") != 0;
    detail::expect_token(is, "scaling");
    const auto scale_n = detail::read_value<std::size_t>(is, "scaling count");
    if (scale_n != 0 && scale_n != inputs)
        throw DecodeError("model file: scaling count must be 0 or match inputs");
    bundle.scaling.mean.resize(scale_n);
    bundle.scaling.stdev.resize(scale_n);
    for (std::size_t i = 0; i < scale_n; ++i) {
        bundle.scaling.mean[i] = detail::read_value<double>(is, "scaling mean");
        bundle.scaling.stdev[i] = detail::read_value<double>(is, "scaling stdev");
        if (!(bundle.scaling.stdev[i] > 0.0))
            throw DecodeError("model file: scaling stdev must be positive");
    }
    if (kind == "linear") {
        LinearModel m;
        detail::expect_token(is, "bias");
        m.bias = detail::read_value<double>(is, "bias");
        detail::expect_token(is, "weights");
        m.weights.resize(inputs);
        for (double& w : m.weights) w = detail::read_value<double>(is, "weight");
        bundle.model = std::move(m);
    } else if (kind == "mlp") {
        bundle.model = detail::read_mlp_body(is, inputs);
    } else if (kind == "nam") {
        NamModel m;
        m.input_dim = inputs;
        detail::expect_token(is, "bias");
        m.bias = detail::read_value<double>(is, "bias");
        for (std::size_t f = 0; f < inputs; ++f) {
            detail::expect_token(is, "subnet");
            const auto idx = detail::read_value<std::size_t>(is, "subnet index");
            if (idx != f) throw DecodeError("model file: subnet indices out of order");
            m.subnets.push_back(detail::read_mlp_body(is, 1));
        }
        bundle.model = std::move(m);
    } else {
        throw DecodeError("model file: unknown kind '" + kind + "'");
    }
    return bundle;
}

}  // namespace gasforge
