#include "gasforge/models.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>

#include "gasforge/util.hpp"

namespace gasforge {
namespace {

namespace fs = std::filesystem;

fs::path temp_file(const std::string& name) {
    const fs::path dir = fs::temp_directory_path() / "gasforge_models_test";
    fs::create_directories(dir);
    return dir / name;
}

Matrix random_matrix(std::mt19937_64& rng, std::size_t rows, std::size_t cols) {
    Matrix x(rows, cols);
    for (double& v : x.data) v = uniform01(rng);
    return x;
}

std::vector<double> linear_targets(const Matrix& x, std::span<const double> w,
                                   double b) {
    std::vector<double> y;
    for (std::size_t r = 0; r < x.rows; ++r) {
        double v = b;
        for (std::size_t c = 0; c < x.cols; ++c) v += w[c] * x.at(r, c);
        y.push_back(v);
    }
    return y;
}

// ------------------------------ metrics ------------------------------

TEST(Metrics, MseAndVarianceHandValues) {
    const std::vector<double> p = {1.0, 2.0, 3.0};
    const std::vector<double> a = {1.0, 0.0, 6.0};
    EXPECT_DOUBLE_EQ(mse(p, a), (0.0 + 4.0 + 9.0) / 3.0);
    EXPECT_DOUBLE_EQ(variance(std::vector<double>{2.0, 4.0, 6.0}), 8.0 / 3.0);
    EXPECT_EQ(variance(std::vector<double>{5.0, 5.0}), 0.0);
    EXPECT_THROW(mse(p, std::vector<double>{1.0}), ValidationError);
    EXPECT_THROW(mse(std::vector<double>{}, std::vector<double>{}), ValidationError);
    EXPECT_THROW(variance(std::vector<double>{}), ValidationError);
}

TEST(SampleRows, DrawsDeterministicallyWithReplacement) {
    std::mt19937_64 rng(83);
    const Matrix x = random_matrix(rng, 7, 3);
    const Matrix a = sample_rows(x, 20, 99);
    const Matrix b = sample_rows(x, 20, 99);
    EXPECT_EQ(a.data, b.data);
    EXPECT_EQ(a.rows, 20u);
    EXPECT_EQ(a.cols, 3u);
    for (std::size_t i = 0; i < a.rows; ++i) {
        bool found = false;
        for (std::size_t r = 0; r < x.rows && !found; ++r)
            found = std::equal(a.row(i).begin(), a.row(i).end(), x.row(r).begin());
        EXPECT_TRUE(found) << "sampled row " << i << " is not a row of x";
    }
    EXPECT_THROW(sample_rows(Matrix{}, 5, 0), ValidationError);
}

// ------------------------------ activations ------------------------------

TEST(Activations, ValuesAndDerivativesAgree) {
    for (Activation act :
         {Activation::tanh_unit, Activation::sigmoid, Activation::softplus}) {
        for (double z : {-3.0, -0.7, 0.0, 0.4, 2.5}) {
            const double a = activate(act, z);
            const double h = 1e-6;
            const double numeric =
                (activate(act, z + h) - activate(act, z - h)) / (2.0 * h);
            EXPECT_NEAR(activate_deriv(act, z, a), numeric, 1e-7)
                << to_string(act) << " at z=" << z;
        }
    }
    EXPECT_DOUBLE_EQ(activate(Activation::tanh_unit, 0.0), 0.0);
    EXPECT_DOUBLE_EQ(activate(Activation::sigmoid, 0.0), 0.5);
    EXPECT_DOUBLE_EQ(activate(Activation::softplus, 0.0), std::log(2.0));
    // Large inputs stay finite (softplus switches to its asymptote).
    EXPECT_EQ(activate(Activation::softplus, 1000.0), 1000.0);
    EXPECT_EQ(activation_from_string("softplus"), Activation::softplus);
    EXPECT_THROW(activation_from_string("relu"), ValidationError);
}

// ------------------------------ linear model ------------------------------

TEST(FitLinear, RecoversAnExactLinearRule) {
    std::mt19937_64 rng(89);
    const Matrix x = random_matrix(rng, 60, 3);
    const std::vector<double> w = {1.5, -2.0, 0.25};
    const std::vector<double> y = linear_targets(x, w, 0.75);
    const LinearModel m = fit_linear(x, y);
    ASSERT_EQ(m.weights.size(), 3u);
    for (std::size_t c = 0; c < 3; ++c) EXPECT_NEAR(m.weights[c], w[c], 1e-6);
    EXPECT_NEAR(m.bias, 0.75, 1e-6);
    EXPECT_LT(mse(predict(Model(m), x), y), 1e-15);
}

TEST(FitLinear, ConstantTargetLandsEntirelyInTheBias) {
    std::mt19937_64 rng(97);
    const Matrix x = random_matrix(rng, 40, 4);
    const std::vector<double> y(40, 0.3125);
    const LinearModel m = fit_linear(x, y);
    EXPECT_NEAR(m.bias, 0.3125, 1e-8);
    for (double w : m.weights) EXPECT_NEAR(w, 0.0, 1e-7);
}

TEST(FitLinear, DuplicateColumnsStaySolvable) {
    std::mt19937_64 rng(101);
    Matrix x(50, 2);
    for (std::size_t r = 0; r < 50; ++r) {
        const double v = uniform01(rng);
        x.at(r, 0) = v;
        x.at(r, 1) = v;  // exact copy
    }
    std::vector<double> y;
    for (std::size_t r = 0; r < 50; ++r) y.push_back(3.0 * x.at(r, 0) + 1.0);
    const LinearModel m = fit_linear(x, y);
    EXPECT_NEAR(m.weights[0] + m.weights[1], 3.0, 1e-4);
    EXPECT_LT(mse(predict(Model(m), x), y), 1e-10);
}

TEST(FitLinear, RejectsBadShapesAndBrokenValues) {
    std::mt19937_64 rng(103);
    const Matrix x = random_matrix(rng, 3, 3);
    EXPECT_THROW(fit_linear(x, std::vector<double>(3, 0.0)), ValidationError);  // rows < cols+1
    const Matrix ok = random_matrix(rng, 10, 2);
    EXPECT_THROW(fit_linear(ok, std::vector<double>(9, 0.0)), ValidationError);
    EXPECT_THROW(fit_linear(Matrix(5, 0), std::vector<double>(5, 0.0)),
                 ValidationError);
    Matrix huge = random_matrix(rng, 10, 2);
    for (double& v : huge.data) v *= 1e200;  // Gram matrix overflows to inf
    EXPECT_THROW(fit_linear(huge, std::vector<double>(10, 1.0)), DomainError);
}

TEST(PredictOne, ChecksDimensions) {
    const LinearModel m{{1.0, 2.0}, 0.5};
    const std::vector<double> x = {1.0, 1.0};
    EXPECT_DOUBLE_EQ(predict_one(m, x), 3.5);
    EXPECT_THROW(predict_one(m, std::vector<double>{1.0}), ValidationError);
}

// ------------------------------ MLP ------------------------------

TEST(InitMlp, ShapesAndDraws) {
    std::mt19937_64 rng(107);
    const std::vector<std::size_t> hidden = {4, 3};
    const MlpModel m = init_mlp(5, hidden, Activation::tanh_unit, rng);
    ASSERT_EQ(m.layers.size(), 3u);
    EXPECT_EQ(m.layers[0].in, 5u);
    EXPECT_EQ(m.layers[0].out, 4u);
    EXPECT_EQ(m.layers[1].in, 4u);
    EXPECT_EQ(m.layers[1].out, 3u);
    EXPECT_EQ(m.layers[2].in, 3u);
    EXPECT_EQ(m.layers[2].out, 1u);
    for (const MlpLayer& layer : m.layers) {
        const double radius =
            std::sqrt(6.0 / static_cast<double>(layer.in + layer.out));
        for (double w : layer.w) {
            EXPECT_GE(w, -radius);
            EXPECT_LE(w, radius);
        }
        for (double b : layer.b) EXPECT_EQ(b, 0.0);
    }
    std::mt19937_64 rng2(107);
    EXPECT_EQ(init_mlp(5, hidden, Activation::tanh_unit, rng2), m);
    EXPECT_THROW(init_mlp(0, hidden, Activation::tanh_unit, rng), ValidationError);
}

TEST(MlpForward, MatchesAHandBuiltNetwork) {
    MlpModel m;
    m.input_dim = 2;
    m.activation = Activation::tanh_unit;
    m.layers.push_back({2, 2, {0.1, -0.2, 0.3, 0.4}, {0.05, -0.05}});
    m.layers.push_back({2, 1, {0.7, -0.6}, {0.2}});
    const std::vector<double> x = {0.5, -1.0};
    const double h0 = std::tanh(0.05 + 0.1 * 0.5 + -0.2 * -1.0);
    const double h1 = std::tanh(-0.05 + 0.3 * 0.5 + 0.4 * -1.0);
    EXPECT_DOUBLE_EQ(mlp_forward(m, x), 0.2 + 0.7 * h0 - 0.6 * h1);
    EXPECT_THROW(mlp_forward(m, std::vector<double>{1.0}), ValidationError);
}

TEST(Gradcheck, MlpAllActivations) {
    std::mt19937_64 data_rng(109);
    const Matrix x = random_matrix(data_rng, 25, 3);
    std::vector<double> y;
    for (std::size_t r = 0; r < x.rows; ++r)
        y.push_back(std::sin(3.0 * x.at(r, 0)) - x.at(r, 1));
    for (Activation act :
         {Activation::tanh_unit, Activation::sigmoid, Activation::softplus}) {
        std::mt19937_64 rng(111);
        const std::vector<std::size_t> hidden = {6, 4};
        const Model m(init_mlp(3, hidden, act, rng));
        EXPECT_LT(finite_diff_gradcheck(m, x, y), 1e-4) << to_string(act);
    }
}

TEST(Gradcheck, LinearIsEssentiallyExact) {
    std::mt19937_64 rng(113);
    const Matrix x = random_matrix(rng, 30, 4);
    const std::vector<double> truth = {0.3, -0.7, 0.1, 0.9};
    const std::vector<double> y = linear_targets(x, truth, 0.2);
    const Model m(LinearModel{{0.5, 0.5, -0.5, 0.0}, 0.1});
    EXPECT_LT(finite_diff_gradcheck(m, x, y), 1e-6);
}

TEST(FitMlp, LearnsAndIsDeterministic) {
    std::mt19937_64 rng(127);
    const Matrix x = random_matrix(rng, 120, 2);
    std::vector<double> y;
    for (std::size_t r = 0; r < x.rows; ++r)
        y.push_back(0.8 * x.at(r, 0) - 0.4 * x.at(r, 1) + 0.1);
    TrainConfig config;
    config.epochs = 60;
    config.learning_rate = 0.05;
    config.hidden_widths = {8};
    config.seed = 5;
    const MlpFit fit = fit_mlp(x, y, config);
    ASSERT_EQ(fit.history.epoch_mse.size(), 60u);
    EXPECT_LT(fit.history.epoch_mse.back(), 0.25 * fit.history.epoch_mse.front());
    const MlpFit again = fit_mlp(x, y, config);
    EXPECT_EQ(fit.model, again.model);
    EXPECT_EQ(fit.history.epoch_mse, again.history.epoch_mse);
    TrainConfig other = config;
    other.seed = 6;
    EXPECT_NE(fit_mlp(x, y, other).model, fit.model);
}

TEST(FitMlp, DivergenceIsReportedWithTheEpoch) {
    std::mt19937_64 rng(131);
    const Matrix x = random_matrix(rng, 40, 2);
    std::vector<double> y(40, 1000.0);
    TrainConfig config;
    config.learning_rate = 1e12;
    config.epochs = 50;
    config.hidden_widths = {8};
    try {
        fit_mlp(x, y, config);
        FAIL() << "expected DomainError";
    } catch (const DomainError& e) {
        EXPECT_NE(std::string(e.what()).find("diverged"), std::string::npos);
        EXPECT_NE(std::string(e.what()).find("epoch"), std::string::npos);
    }
}

TEST(TrainConfig, ValidatesItsFields) {
    std::mt19937_64 rng(137);
    const Matrix x = random_matrix(rng, 10, 2);
    const std::vector<double> y(10, 0.0);
    const auto expect_reject = [&](auto mutate) {
        TrainConfig config;
        mutate(config);
        EXPECT_THROW(fit_mlp(x, y, config), ValidationError);
    };
    expect_reject([](TrainConfig& c) { c.learning_rate = 0.0; });
    expect_reject([](TrainConfig& c) { c.grid_points = 1; });
    expect_reject([](TrainConfig& c) { c.step_c = 0.0; });
    expect_reject([](TrainConfig& c) { c.lambda = -1.0; });
    expect_reject([](TrainConfig& c) { c.batch_size = 0; });
    expect_reject([](TrainConfig& c) { c.audit_contexts = 0; });
    expect_reject([](TrainConfig& c) { c.hidden_widths = {4, 0}; });
}

// ------------------------------ NAM ------------------------------

TEST(Nam, PredictionIsTheSumOfContributions) {
    std::mt19937_64 rng(139);
    NamModel m = init_nam(3, std::vector<std::size_t>{5}, Activation::tanh_unit, rng);
    m.bias = 0.25;
    const std::vector<double> x = {0.2, 0.9, 0.5};
    double total = m.bias;
    for (std::size_t f = 0; f < 3; ++f) total += contribution(m, f, x[f]);
    EXPECT_DOUBLE_EQ(predict_one(m, x), total);
    EXPECT_THROW(contribution(m, 3, 0.5), ValidationError);
    EXPECT_THROW(predict_one(m, std::vector<double>{0.1}), ValidationError);
}

TEST(Gradcheck, NamStaysTight) {
    std::mt19937_64 data_rng(149);
    const Matrix x = random_matrix(data_rng, 25, 3);
    std::vector<double> y;
    for (std::size_t r = 0; r < x.rows; ++r)
        y.push_back(x.at(r, 0) * x.at(r, 0) - 0.5 * x.at(r, 2));
    std::mt19937_64 rng(151);
    const Model m(init_nam(3, std::vector<std::size_t>{6}, Activation::sigmoid, rng));
    EXPECT_LT(finite_diff_gradcheck(m, x, y), 1e-4);
}

TEST(FitNam, LearnsAnAdditiveTarget) {
    std::mt19937_64 rng(157);
    const Matrix x = random_matrix(rng, 150, 2);
    std::vector<double> y;
    for (std::size_t r = 0; r < x.rows; ++r)
        y.push_back(0.6 * x.at(r, 0) - 0.3 * x.at(r, 1));
    TrainConfig config;
    config.epochs = 120;
    config.learning_rate = 0.05;
    config.hidden_widths = {8};
    config.seed = 11;
    const NamFit fit = fit_nam(x, y, config);
    EXPECT_LT(fit.history.epoch_mse.back(), 0.25 * fit.history.epoch_mse.front());
    EXPECT_EQ(fit_nam(x, y, config).model, fit.model);
}

// ------------------------------ monotonicity ------------------------------

TEST(MonotonicViolation, LinearModelMatchesClosedForm) {
    std::mt19937_64 rng(163);
    const Matrix contexts = random_matrix(rng, 8, 2);
    const std::size_t grid = 11;
    const double c = 0.01;
    const MonotonicityConstraint constraint{0, 1};

    // Important weight dominates: every sample is satisfied exactly.
    const Model good(LinearModel{{2.0, 0.5}, 0.1});
    EXPECT_EQ(monotonic_violation(good, constraint, grid, c, contexts), 0.0);

    // Lesser weight dominates: per-sample violation is (|w_l| - |w_i|) * c.
    const Model bad(LinearModel{{0.5, 2.0}, 0.1});
    const double expected = static_cast<double>(grid * contexts.rows) *
                            (2.0 - 0.5) * c;
    EXPECT_NEAR(monotonic_violation(bad, constraint, grid, c, contexts), expected,
                1e-9);

    // Sign does not matter, only magnitude of the response.
    const Model negated(LinearModel{{-2.0, 0.5}, 0.1});
    EXPECT_EQ(monotonic_violation(negated, constraint, grid, c, contexts), 0.0);
}

TEST(MonotonicViolation, SamplesCoverTheFullGrid) {
    std::mt19937_64 rng(167);
    const Matrix contexts = random_matrix(rng, 4, 2);
    const Model m(LinearModel{{1.0, 1.0}, 0.0});
    const auto samples = violation_samples(m, {0, 1}, 5, 0.02, contexts);
    ASSERT_EQ(samples.size(), 20u);
    EXPECT_EQ(samples.front().grid_point, 0.0);
    EXPECT_EQ(samples.back().grid_point, 1.0);
    for (const ViolationSample& s : samples) {
        EXPECT_GE(s.violation, 0.0);
        EXPECT_NEAR(s.violation,
                    std::max(0.0, s.delta_gamma - s.delta_beta), 0.0);
        EXPECT_LT(s.context_id, 4u);
    }
}

TEST(MonotonicViolation, ValidatesItsInputs) {
    std::mt19937_64 rng(173);
    const Matrix contexts = random_matrix(rng, 4, 2);
    const Model m(LinearModel{{1.0, 1.0}, 0.0});
    EXPECT_THROW(monotonic_violation(m, {0, 0}, 5, 0.02, contexts),
                 ValidationError);
    EXPECT_THROW(monotonic_violation(m, {0, 7}, 5, 0.02, contexts),
                 ValidationError);
    EXPECT_THROW(monotonic_violation(m, {0, 1}, 1, 0.02, contexts),
                 ValidationError);
    EXPECT_THROW(monotonic_violation(m, {0, 1}, 5, 0.0, contexts),
                 ValidationError);
    EXPECT_THROW(monotonic_violation(m, {0, 1}, 5, 0.02, Matrix(0, 2)),
                 ValidationError);
    const Model wrong_dim(LinearModel{{1.0, 1.0, 1.0}, 0.0});
    EXPECT_THROW(monotonic_violation(wrong_dim, {0, 1}, 5, 0.02, contexts),
                 ValidationError);
}

TEST(ViolationReport, WritesOneRowPerSample) {
    std::mt19937_64 rng(179);
    const Matrix contexts = random_matrix(rng, 3, 2);
    const Model m(LinearModel{{0.5, 2.0}, 0.0});
    const fs::path path = temp_file("violations.csv");
    write_violation_report(m, {0, 1}, 4, 0.01, contexts, path);
    std::ifstream is(path);
    std::string line;
    std::getline(is, line);
    EXPECT_EQ(line, "grid_point,context_id,delta_beta,delta_gamma,violation");
    std::size_t rows = 0;
    while (std::getline(is, line))
        if (!line.empty()) ++rows;
    EXPECT_EQ(rows, 12u);
}

TrainConfig nam_config(std::uint64_t seed) {
    TrainConfig config;
    config.learning_rate = 0.05;
    config.epochs = 400;
    config.seed = seed;
    config.lambda = 25.0;
    config.grid_points = 21;
    config.step_c = 0.01;
    config.batch_size = 32;
    config.hidden_widths = {8};
    config.audit_contexts = 16;
    return config;
}

TEST(FitNamMonotonic, DrivesTheAuditToExactZero) {
    std::mt19937_64 rng(181);
    const Matrix x = random_matrix(rng, 150, 2);
    std::vector<double> y;
    for (std::size_t r = 0; r < x.rows; ++r)
        y.push_back(0.6 * x.at(r, 1) - 0.2 * x.at(r, 0) + 0.1);
    const TrainConfig config = nam_config(3);
    const MonotonicityConstraint constraint{1, 0};
    const MonotonicNamFit fit =
        fit_nam_monotonic(x, y, config, std::span(&constraint, 1));
    EXPECT_TRUE(fit.zero_violation);
    EXPECT_EQ(fit.final_violation, 0.0);
    // The audit passes on any context sample, not just the one used in
    // training: additivity makes the deltas context-free.
    const Matrix fresh = sample_rows(x, 32, 0xabcdef);
    EXPECT_EQ(monotonic_violation(Model(fit.model), constraint, config.grid_points,
                                  config.step_c, fresh),
              0.0);
    // Accuracy survives the constraint: still far better than predicting 0.
    const double fit_mse = mse(predict(Model(fit.model), x), y);
    EXPECT_LT(fit_mse, mse(std::vector<double>(y.size(), 0.0), y));
}

TEST(FitNamMonotonic, LambdaZeroIsTheUnconstrainedFit) {
    std::mt19937_64 rng(191);
    const Matrix x = random_matrix(rng, 80, 2);
    std::vector<double> y;
    for (std::size_t r = 0; r < x.rows; ++r) y.push_back(x.at(r, 0));
    TrainConfig config = nam_config(7);
    config.epochs = 40;
    config.lambda = 0.0;
    const MonotonicityConstraint constraint{1, 0};
    const MonotonicNamFit constrained =
        fit_nam_monotonic(x, y, config, std::span(&constraint, 1));
    const NamFit plain = fit_nam(x, y, config);
    EXPECT_EQ(constrained.model, plain.model);
    EXPECT_EQ(constrained.step2_epochs, 0u);
    EXPECT_GT(constrained.final_violation, 0.0);  // audited but untouched
    EXPECT_FALSE(constrained.zero_violation);
}

TEST(FitNamMonotonic, NoConstraintsShortCircuits) {
    std::mt19937_64 rng(193);
    const Matrix x = random_matrix(rng, 50, 2);
    std::vector<double> y(50, 0.25);
    TrainConfig config = nam_config(9);
    config.epochs = 20;
    const MonotonicNamFit fit = fit_nam_monotonic(x, y, config, {});
    EXPECT_TRUE(fit.zero_violation);
    EXPECT_EQ(fit.final_violation, 0.0);
    EXPECT_EQ(fit.step2_epochs, 0u);
    EXPECT_EQ(fit.model, fit_nam(x, y, config).model);
}

TEST(FitNamMonotonic, BudgetExhaustionIsReportedNotThrown) {
    std::mt19937_64 rng(197);
    const Matrix x = random_matrix(rng, 400, 2);
    std::vector<double> y;
    // Target depends only on the lesser lag: the constraint fights the data,
    // and the penalty is too weak to win inside the epoch budget.
    for (std::size_t r = 0; r < x.rows; ++r) y.push_back(x.at(r, 0) - 0.5);
    TrainConfig config = nam_config(13);
    config.epochs = 3;
    config.lambda = 0.05;
    const MonotonicityConstraint constraint{1, 0};
    const MonotonicNamFit fit =
        fit_nam_monotonic(x, y, config, std::span(&constraint, 1));
    EXPECT_FALSE(fit.zero_violation);
    EXPECT_GT(fit.final_violation, 0.0);
    EXPECT_EQ(fit.step2_epochs, 3u);
    EXPECT_EQ(fit.history.epoch_violation.size(), 3u);
}

TEST(FitNamMonotonic, DeterministicPerSeed) {
    std::mt19937_64 rng(199);
    const Matrix x = random_matrix(rng, 60, 2);
    std::vector<double> y;
    for (std::size_t r = 0; r < x.rows; ++r) y.push_back(0.4 * x.at(r, 1));
    TrainConfig config = nam_config(21);
    config.epochs = 30;
    const MonotonicityConstraint constraint{1, 0};
    const MonotonicNamFit a =
        fit_nam_monotonic(x, y, config, std::span(&constraint, 1));
    const MonotonicNamFit b =
        fit_nam_monotonic(x, y, config, std::span(&constraint, 1));
    EXPECT_EQ(a.model, b.model);
    EXPECT_EQ(a.final_violation, b.final_violation);
    EXPECT_EQ(a.step2_epochs, b.step2_epochs);
}

// ------------------------------ registry ------------------------------

TEST(Registry, ShipsTheThreeBuiltins) {
    ModelRegistry& registry = ModelRegistry::instance();
    EXPECT_TRUE(registry.contains("linear"));
    EXPECT_TRUE(registry.contains("mlp"));
    EXPECT_TRUE(registry.contains("nam"));
    std::mt19937_64 rng(211);
    const Matrix x = random_matrix(rng, 30, 2);
    const std::vector<double> truth = {1.0, -1.0};
    const std::vector<double> y = linear_targets(x, truth, 0.5);
    const Model by_name = registry.train("linear", x, y, {});
    EXPECT_EQ(std::get<LinearModel>(by_name), fit_linear(x, y));
}

TEST(Registry, UnknownKindListsWhatIsRegistered) {
    std::mt19937_64 rng(223);
    const Matrix x = random_matrix(rng, 10, 2);
    const std::vector<double> y(10, 0.0);
    try {
        ModelRegistry::instance().train("forest", x, y, {});
        FAIL() << "expected ValidationError";
    } catch (const ValidationError& e) {
        const std::string what = e.what();
        EXPECT_NE(what.find("forest"), std::string::npos);
        EXPECT_NE(what.find("linear"), std::string::npos);
        EXPECT_NE(what.find("mlp"), std::string::npos);
        EXPECT_NE(what.find("nam"), std::string::npos);
    }
}

TEST(Registry, AcceptsNewTrainers) {
    ModelRegistry& registry = ModelRegistry::instance();
    registry.register_trainer(
        "mean", [](const Matrix& x, std::span<const double> y, const TrainConfig&) {
            LinearModel m;
            m.weights.assign(x.cols, 0.0);
            m.bias = std::accumulate(y.begin(), y.end(), 0.0) /
                     static_cast<double>(y.size());
            return Model(m);
        });
    EXPECT_TRUE(registry.contains("mean"));
    std::mt19937_64 rng(227);
    const Matrix x = random_matrix(rng, 10, 2);
    const std::vector<double> y = {1, 2, 3, 4, 5, 6, 7, 8, 9, 10};
    const Model m = registry.train("mean", x, y, {});
    EXPECT_DOUBLE_EQ(std::get<LinearModel>(m).bias, 5.5);
}

// ------------------------------ serialization ------------------------------

FeatureScaling toy_scaling(std::size_t n) {
    FeatureScaling s;
    for (std::size_t i = 0; i < n; ++i) {
        s.mean.push_back(0.25 * static_cast<double>(i + 1));
        s.stdev.push_back(1.0 + 0.5 * static_cast<double>(i));
    }
    return s;
}

TEST(FeatureScaling, StandardizesInPlace) {
    const FeatureScaling s = toy_scaling(2);
    std::vector<double> x = {0.75, 1.0};
    s.apply(x);
    EXPECT_DOUBLE_EQ(x[0], 0.5);                 // (0.75 - 0.25) / 1.0
    EXPECT_DOUBLE_EQ(x[1], (1.0 - 0.5) / 1.5);
    std::vector<double> wrong = {1.0};
    EXPECT_THROW(s.apply(wrong), ValidationError);
    const FeatureScaling identity;
    std::vector<double> untouched = {4.0, 5.0};
    identity.apply(untouched);
    EXPECT_EQ(untouched, (std::vector<double>{4.0, 5.0}));
}

TEST(Serialization, LinearRoundTripIsBitExact) {
    std::mt19937_64 rng(229);
    const Matrix x = random_matrix(rng, 30, 3);
    const std::vector<double> y = linear_targets(x, {{0.1, 0.2, -0.3}}, 1.0 / 3.0);
    ModelBundle bundle;
    bundle.model = fit_linear(x, y);
    bundle.scaling = toy_scaling(3);
    bundle.k = 1;
    bundle.use_day_sentiment = true;
    const fs::path path = temp_file("linear.model");
    save_model(bundle, path);
    const ModelBundle back = load_model(path);
    EXPECT_EQ(std::get<LinearModel>(back.model), std::get<LinearModel>(bundle.model));
    EXPECT_EQ(back.scaling, bundle.scaling);
    EXPECT_EQ(back.k, 1u);
    EXPECT_FALSE(back.use_hour_sentiment);
    EXPECT_TRUE(back.use_day_sentiment);
}

TEST(Serialization, MlpRoundTripIsBitExact) {
    std::mt19937_64 rng(233);
    const Matrix x = random_matrix(rng, 40, 2);
    std::vector<double> y;
    for (std::size_t r = 0; r < x.rows; ++r) y.push_back(x.at(r, 0) - x.at(r, 1));
    TrainConfig config;
    config.epochs = 10;
    config.hidden_widths = {5, 3};
    config.activation = Activation::softplus;
    ModelBundle bundle;
    bundle.model = fit_mlp(x, y, config).model;
    bundle.k = 1;
    const fs::path path = temp_file("mlp.model");
    save_model(bundle, path);
    const ModelBundle back = load_model(path);
    EXPECT_EQ(std::get<MlpModel>(back.model), std::get<MlpModel>(bundle.model));
    EXPECT_TRUE(back.scaling.identity());
}

TEST(Serialization, NamRoundTripIsBitExact) {
    std::mt19937_64 rng(239);
    const Matrix x = random_matrix(rng, 40, 3);
    std::vector<double> y;
    for (std::size_t r = 0; r < x.rows; ++r) y.push_back(0.5 * x.at(r, 2));
    TrainConfig config;
    config.epochs = 8;
    config.hidden_widths = {4};
    ModelBundle bundle;
    bundle.model = fit_nam(x, y, config).model;
    bundle.scaling = toy_scaling(3);
    bundle.k = 3;
    bundle.use_hour_sentiment = true;
    const fs::path path = temp_file("nam.model");
    save_model(bundle, path);
    const ModelBundle back = load_model(path);
    EXPECT_EQ(std::get<NamModel>(back.model), std::get<NamModel>(bundle.model));
    EXPECT_EQ(back.scaling, bundle.scaling);
    // Round-tripped bundle predicts identically, scaling included.
    const std::vector<double> probe = {0.9, 0.1, 0.4};
    EXPECT_EQ(predict_scaled(back, probe), predict_scaled(bundle, probe));
}

TEST(Serialization, RejectsCorruptFiles) {
    const auto write = [&](const std::string& name, const std::string& content) {
        const fs::path path = temp_file(name);
        std::ofstream(path) << content;
        return path;
    };
    EXPECT_THROW(load_model(write("magic.model", "not-a-model v1\n")), DecodeError);
    EXPECT_THROW(load_model(write("version.model", "gasforge-model v9\nkind linear\n")),
                 DecodeError);
    EXPECT_THROW(
        load_model(write("kind.model",
                         "gasforge-model v1\nkind forest\ninputs 1\nwindow 1\n"
                         "hour_sentiment 0\nday_sentiment 0\nscaling 0\n")),
        DecodeError);
    EXPECT_THROW(
        load_model(write("truncated.model",
                         "gasforge-model v1\nkind linear\ninputs 3\nwindow 1\n"
                         "hour_sentiment 0\nday_sentiment 0\nscaling 0\n"
                         "bias 0.5\nweights 0.1 0.2\n")),
        DecodeError);
    EXPECT_THROW(
        load_model(write("scalecount.model",
                         "gasforge-model v1\nkind linear\ninputs 2\nwindow 1\n"
                         "hour_sentiment 0\nday_sentiment 0\nscaling 1\n"
                         "0.5 1.0\nbias 0.5\nweights 0.1 0.2\n")),
        DecodeError);
    EXPECT_THROW(
        load_model(write("badstdev.model",
                         "gasforge-model v1\nkind linear\ninputs 2\nwindow 1\n"
                         "hour_sentiment 0\nday_sentiment 0\nscaling 2\n"
                         "0.5 1.0\n0.5 0\nbias 0.5\nweights 0.1 0.2\n")),
        DecodeError);
    EXPECT_THROW(
        load_model(write("nonfinite.model",
                         "gasforge-model v1\nkind mlp\ninputs 1\nwindow 1\n"
                         "hour_sentiment 0\nday_sentiment 0\nscaling 0\n"
                         "activation tanh\nlayers 1\nlayer 1 1\nw inf\nb 0\n")),
        DecodeError);
    EXPECT_THROW(
        load_model(write("layerdims.model",
                         "gasforge-model v1\nkind mlp\ninputs 2\nwindow 1\n"
                         "hour_sentiment 0\nday_sentiment 0\nscaling 0\n"
                         "activation tanh\nlayers 1\nlayer 3 1\nw 0.1 0.2 0.3\nb 0\n")),
        DecodeError);
    EXPECT_THROW(
        load_model(write("subnetorder.model",
                         "gasforge-model v1\nkind nam\ninputs 2\nwindow 1\n"
                         "hour_sentiment 0\nday_sentiment 0\nscaling 0\n"
                         "bias 0\nsubnet 1\nactivation tanh\nlayers 1\n"
                         "layer 1 1\nw 0.1\nb 0\n")),
        DecodeError);
    EXPECT_THROW(load_model(temp_file("absent.model")), IoError);
}

}  // namespace
}  // namespace gasforge
