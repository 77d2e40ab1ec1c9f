#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <numeric>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <json.hpp>

#include "gasforge/csv.hpp"
#include "gasforge/demand.hpp"
#include "gasforge/errors.hpp"
#include "gasforge/features.hpp"
#include "gasforge/models.hpp"
#include "gasforge/simulate.hpp"
#include "gasforge/util.hpp"

namespace gasforge {

// Experiment harness: runs the period x window-length x feature-setting
// grid, aggregates MSE and variance across seeded trials, compares the two
// fee-setting modes, and emits reports.

// ------------------------------ design assembly ------------------------------

struct DesignMatrix {
    Matrix x;
    std::vector<double> y;
    std::vector<std::string> columns;
};

// Flattens windows into a feature matrix. Column order matches the dataset
// CSV: alpha lags, beta lags, then the requested sentiment triples.
inline DesignMatrix assemble_design(const AlignedDataset& dataset,
                                    const DatasetConfig& flags) {
    if (flags.use_hour_sentiment && !dataset.config.use_hour_sentiment)
        throw ValidationError("hourly sentiment requested but absent from dataset");
    if (flags.use_day_sentiment && !dataset.config.use_day_sentiment)
        throw ValidationError("daily sentiment requested but absent from dataset");
    if (dataset.windows.empty()) throw ValidationError("dataset has no windows");
    const std::size_t k = dataset.k;
    DesignMatrix out;
    for (std::size_t i = 1; i <= k; ++i)
        out.columns.push_back("alpha_" + std::to_string(i));
    for (std::size_t i = 1; i <= k; ++i)
        out.columns.push_back("beta_" + std::to_string(i));
    if (flags.use_hour_sentiment) {
        out.columns.emplace_back("gh_pos");
        out.columns.emplace_back("gh_neg");
        out.columns.emplace_back("gh_neu");
    }
    if (flags.use_day_sentiment) {
        out.columns.emplace_back("gd_pos");
        out.columns.emplace_back("gd_neg");
        out.columns.emplace_back("gd_neu");
    }
    out.x = Matrix(dataset.windows.size(), out.columns.size());
    out.y.reserve(dataset.windows.size());
    for (std::size_t r = 0; r < dataset.windows.size(); ++r) {
        const FeatureWindow& w = dataset.windows[r];
        if (w.alphas.size() != k || w.betas.size() != k)
            throw ValidationError("window length disagrees with dataset k");
        std::size_t c = 0;
        for (double a : w.alphas) out.x.at(r, c++) = a;
        for (Wei b : w.betas) out.x.at(r, c++) = static_cast<double>(b);
        if (flags.use_hour_sentiment) {
            if (!w.gamma_hour) throw ValidationError("window missing hourly sentiment");
            out.x.at(r, c++) = w.gamma_hour->p_pos;
            out.x.at(r, c++) = w.gamma_hour->p_neg;
            out.x.at(r, c++) = w.gamma_hour->p_neu;
        }
        if (flags.use_day_sentiment) {
            if (!w.gamma_day) throw ValidationError("window missing daily sentiment");
            out.x.at(r, c++) = w.gamma_day->p_pos;
            out.x.at(r, c++) = w.gamma_day->p_neg;
            out.x.at(r, c++) = w.gamma_day->p_neu;
        }
        out.y.push_back(w.target_y);
    }
    return out;
}

// Standardizes the fee columns (beta_*) using training-set statistics;
// every other column passes through untouched. Fees are in wei, so without
// this the fee scale would dwarf the unit-interval features.
inline FeatureScaling fit_scaling(const Matrix& x,
                                  std::span<const std::string> columns) {
    if (x.cols != columns.size())
        throw ValidationError("column names do not match matrix width");
    if (x.rows == 0) throw ValidationError("cannot fit scaling on an empty matrix");
    FeatureScaling scaling;
    scaling.mean.assign(x.cols, 0.0);
    scaling.stdev.assign(x.cols, 1.0);
    for (std::size_t c = 0; c < x.cols; ++c) {
        if (columns[c].rfind("beta_", 0) != 0) continue;
        double mean = 0.0;
        for (std::size_t r = 0; r < x.rows; ++r) mean += x.at(r, c);
        mean /= static_cast<double>(x.rows);
        double var = 0.0;
        for (std::size_t r = 0; r < x.rows; ++r) {
            const double d = x.at(r, c) - mean;
            var += d * d;
        }
        const double stdev = std::sqrt(var / static_cast<double>(x.rows));
        scaling.mean[c] = mean;
        scaling.stdev[c] = stdev > 1e-12 ? stdev : 1.0;
    }
    return scaling;
}

inline void apply_scaling(Matrix& x, const FeatureScaling& scaling) {
    if (scaling.identity()) return;
    if (x.cols != scaling.mean.size())
        throw ValidationError("scaling dimension does not match matrix width");
    for (std::size_t r = 0; r < x.rows; ++r)
        for (std::size_t c = 0; c < x.cols; ++c)
            x.at(r, c) = (x.at(r, c) - scaling.mean[c]) / scaling.stdev[c];
}

// ------------------------------ experiments ------------------------------

struct ExperimentSpec {
    std::string period_label;
    std::filesystem::path dataset_path;
    std::size_t k = 3;
    bool use_day_sentiment = false;
    bool use_hour_sentiment = false;
    std::string model_kind = "nam";
    std::size_t trials = 5;
    std::uint64_t base_seed = 42;
    double train_fraction = 0.8;
    TrainConfig train;

    void validate() const {
        if (trials == 0) throw ValidationError("trials must be >= 1");
        if (k == 0) throw ValidationError("k must be >= 1");
        if (!(train_fraction > 0.0 && train_fraction < 1.0))
            throw ValidationError("train_fraction must lie in (0, 1)");
        train.validate();
    }
};

// The on-chain block is always included; only the sentiment flags vary.
inline std::string render_setting(bool use_day, bool use_hour) {
    std::string out = "+OC,";
    out += use_day ? "+DS," : "-DS,";
    out += use_hour ? "+HS" : "-HS";
    return out;
}

struct ReportRow {
    std::string period;
    std::size_t k = 0;
    std::string setting;
    std::string model_kind;
    double mean_mse = 0.0;
    double variance = 0.0;
    std::size_t trials = 0;

    bool operator==(const ReportRow&) const = default;
};

namespace detail {

inline ReportRow run_experiment_on(const AlignedDataset& dataset,
                                   const ExperimentSpec& spec) {
    spec.validate();
    if (dataset.k != spec.k)
        throw ValidationError("dataset window length " + std::to_string(dataset.k) +
                              " does not match spec k " + std::to_string(spec.k));
    const DatasetConfig flags{spec.use_hour_sentiment, spec.use_day_sentiment};
    const auto [train_set, test_set] = chronological_split(dataset, spec.train_fraction);
    DesignMatrix train_dm = assemble_design(train_set, flags);
    DesignMatrix test_dm = assemble_design(test_set, flags);
    const FeatureScaling scaling = fit_scaling(train_dm.x, train_dm.columns);
    apply_scaling(train_dm.x, scaling);
    apply_scaling(test_dm.x, scaling);

    std::vector<double> losses;
    losses.reserve(spec.trials);
    for (std::size_t t = 0; t < spec.trials; ++t) {
        TrainConfig config = spec.train;
        config.seed = spec.base_seed + t;
        try {
            const Model model = ModelRegistry::instance().train(
                spec.model_kind, train_dm.x, train_dm.y, config);
            losses.push_back(mse(predict(model, test_dm.x), test_dm.y));
        } catch (const std::exception& e) {
            throw DomainError("trial " + std::to_string(t) + ": " + e.what());
        }
    }
    ReportRow row;
    row.period = spec.period_label;
    row.k = spec.k;
    row.setting = render_setting(spec.use_day_sentiment, spec.use_hour_sentiment);
    row.model_kind = spec.model_kind;
    row.mean_mse = std::accumulate(losses.begin(), losses.end(), 0.0) /
                   static_cast<double>(losses.size());
    row.variance = variance(losses);
    row.trials = spec.trials;
    return row;
}

}  // namespace detail

inline ReportRow run_experiment(const ExperimentSpec& spec) {
    return detail::run_experiment_on(import_dataset(spec.dataset_path), spec);
}

struct CellFailure {
    std::string period;
    std::size_t k = 0;
    std::string setting;
    std::string message;
};

struct MatrixResult {
    std::vector<ReportRow> rows;
    std::vector<CellFailure> failures;
};

// Canonical cell order: periods in first-appearance order, k descending
// (3, 2, 1), settings +DS+HS, +DS-HS, -DS+HS, -DS-HS.
inline std::vector<std::size_t> matrix_order(std::span<const ExperimentSpec> specs) {
    std::vector<std::string> periods;
    auto period_rank = [&](const std::string& p) {
        for (std::size_t i = 0; i < periods.size(); ++i)
            if (periods[i] == p) return i;
        periods.push_back(p);
        return periods.size() - 1;
    };
    std::vector<std::size_t> order(specs.size());
    std::iota(order.begin(), order.end(), 0);
    std::vector<std::size_t> ranks(specs.size());
    for (std::size_t i = 0; i < specs.size(); ++i)
        ranks[i] = period_rank(specs[i].period_label);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        if (ranks[a] != ranks[b]) return ranks[a] < ranks[b];
        if (specs[a].k != specs[b].k) return specs[a].k > specs[b].k;
        const auto setting_rank = [](const ExperimentSpec& s) {
            return (s.use_day_sentiment ? 0 : 2) + (s.use_hour_sentiment ? 0 : 1);
        };
        return setting_rank(specs[a]) < setting_rank(specs[b]);
    });
    return order;
}

// Runs every cell, isolating failures: a failed cell is annotated and the
// remaining cells still report. Cells are independent, so they may run on
// several workers; results land in per-cell slots, keeping the output
// deterministic regardless of scheduling.
inline MatrixResult run_matrix(std::span<const ExperimentSpec> specs,
                               unsigned workers = 1) {
    if (specs.empty()) throw ValidationError("experiment list is empty");
    for (const ExperimentSpec& spec : specs) spec.validate();

    std::map<std::string, AlignedDataset> datasets;
    std::map<std::string, std::string> load_errors;
    for (const ExperimentSpec& spec : specs) {
        const std::string key = spec.dataset_path.string();
        if (datasets.count(key) || load_errors.count(key)) continue;
        try {
            datasets.emplace(key, import_dataset(spec.dataset_path));
        } catch (const std::exception& e) {
            load_errors.emplace(key, e.what());
        }
    }

    const std::vector<std::size_t> order = matrix_order(specs);
    std::vector<std::optional<ReportRow>> rows(specs.size());
    std::vector<std::optional<CellFailure>> failures(specs.size());
    parallel_for(order.size(), workers, [&](std::size_t slot) {
        const ExperimentSpec& spec = specs[order[slot]];
        const std::string key = spec.dataset_path.string();
        try {
            const auto bad = load_errors.find(key);
            if (bad != load_errors.end()) throw ValidationError(bad->second);
            rows[slot] = detail::run_experiment_on(datasets.at(key), spec);
        } catch (const std::exception& e) {
            failures[slot] = CellFailure{
                spec.period_label, spec.k,
                render_setting(spec.use_day_sentiment, spec.use_hour_sentiment),
                e.what()};
        }
    });
    MatrixResult result;
    for (std::size_t i = 0; i < specs.size(); ++i) {
        if (rows[i]) result.rows.push_back(std::move(*rows[i]));
        if (failures[i]) result.failures.push_back(std::move(*failures[i]));
    }
    return result;
}

// ------------------------------ reports ------------------------------

enum class ReportFormat { csv, json, markdown };

inline ReportFormat report_format_from_string(std::string_view name) {
    if (name == "csv") return ReportFormat::csv;
    if (name == "json") return ReportFormat::json;
    if (name == "markdown" || name == "md") return ReportFormat::markdown;
    throw ValidationError("unknown report format '" + std::string(name) +
                          "' (expected csv, json, or markdown)");
}

inline constexpr std::string_view kReportCsvHeader =
    "period,k,setting,model,mean_mse,variance,trials";

inline void report_to_csv(std::span<const ReportRow> rows, std::ostream& os) {
    os << kReportCsvHeader << '\n';
    for (const ReportRow& r : rows) {
        const std::string fields[] = {r.period,
                                      std::to_string(r.k),
                                      r.setting,
                                      r.model_kind,
                                      format_double(r.mean_mse),
                                      format_double(r.variance),
                                      std::to_string(r.trials)};
        write_csv_row(os, fields);
    }
}

inline std::vector<ReportRow> report_from_csv(std::istream& is) {
    CsvReader reader(is);
    auto header = reader.next_row();
    std::string joined;
    if (header)
        for (std::size_t i = 0; i < header->size(); ++i) {
            if (i > 0) joined.push_back(',');
            joined += (*header)[i];
        }
    if (joined != kReportCsvHeader)
        throw ValidationError("report header mismatch, expected '" +
                              std::string(kReportCsvHeader) + "'");
    std::vector<ReportRow> rows;
    while (auto row = reader.next_row()) {
        if (row->size() == 1 && (*row)[0].empty()) continue;
        const std::size_t line = reader.row_line();
        if (row->size() != 7)
            throw ValidationError("line " + std::to_string(line) +
                                  ": expected 7 fields");
        ReportRow r;
        r.period = (*row)[0];
        r.k = parse_integer<std::size_t>((*row)[1], "k", line);
        r.setting = (*row)[2];
        r.model_kind = (*row)[3];
        r.mean_mse = parse_double((*row)[4], "mean_mse", line);
        r.variance = parse_double((*row)[5], "variance", line);
        r.trials = parse_integer<std::size_t>((*row)[6], "trials", line);
        rows.push_back(std::move(r));
    }
    return rows;
}

inline nlohmann::json report_to_json(std::span<const ReportRow> rows) {
    nlohmann::json out = nlohmann::json::array();
    for (const ReportRow& r : rows)
        out.push_back({{"period", r.period},
                       {"k", r.k},
                       {"setting", r.setting},
                       {"model", r.model_kind},
                       {"mean_mse", r.mean_mse},
                       {"variance", r.variance},
                       {"trials", r.trials}});
    return out;
}

inline std::vector<ReportRow> report_from_json(const nlohmann::json& j) {
    if (!j.is_array()) throw DecodeError("report JSON must be an array");
    std::vector<ReportRow> rows;
    for (const auto& item : j) {
        ReportRow r;
        try {
            r.period = item.at("period").get<std::string>();
            r.k = item.at("k").get<std::size_t>();
            r.setting = item.at("setting").get<std::string>();
            r.model_kind = item.at("model").get<std::string>();
            r.mean_mse = item.at("mean_mse").get<double>();
            r.variance = item.at("variance").get<double>();
            r.trials = item.at("trials").get<std::size_t>();
        } catch (const nlohmann::json::exception& e) {
            throw DecodeError(std::string("report JSON: ") + e.what());
        }
        rows.push_back(std::move(r));
    }
    return rows;
}

// Pivot to the two-band layout: one column per setting, one row per k
// (descending), one bold band row per period.
inline void report_to_markdown(std::span<const ReportRow> rows, std::ostream& os) {
    const std::string settings[] = {"+OC,+DS,+HS", "+OC,+DS,-HS", "+OC,-DS,+HS",
                                    "+OC,-DS,-HS"};
    std::vector<std::string> periods;
    std::map<std::string, std::vector<std::size_t>> ks_by_period;
    for (const ReportRow& r : rows) {
        if (std::find(periods.begin(), periods.end(), r.period) == periods.end())
            periods.push_back(r.period);
        auto& ks = ks_by_period[r.period];
        if (std::find(ks.begin(), ks.end(), r.k) == ks.end()) ks.push_back(r.k);
    }
    auto find_cell = [&](const std::string& period, std::size_t k,
                         const std::string& setting) -> const ReportRow* {
        for (const ReportRow& r : rows)
            if (r.period == period && r.k == k && r.setting == setting) return &r;
        return nullptr;
    };
    os << "| |";
    for (const std::string& s : settings) os << ' ' << s << " |";
    os << "\n|---|";
    for (std::size_t i = 0; i < 4; ++i) os << "---|";
    os << '\n';
    for (const std::string& period : periods) {
        os << "| **" << period << "** | | | | |\n";
        auto& ks = ks_by_period[period];
        std::sort(ks.begin(), ks.end(), std::greater<>());
        for (std::size_t k : ks) {
            os << "| " << k << (k == 1 ? " Timestep" : " Timesteps") << " |";
            for (const std::string& setting : settings) {
                const ReportRow* cell = find_cell(period, k, setting);
                if (cell == nullptr) {
                    os << " n/a |";
                } else {
                    char buf[32];
                    std::snprintf(buf, sizeof buf, "%.5f", cell->mean_mse);
                    os << ' ' << buf << " |";
                }
            }
            os << '\n';
        }
    }
}

inline void emit_report(std::span<const ReportRow> rows,
                        const std::filesystem::path& path, ReportFormat format) {
    if (rows.empty()) throw ValidationError("cannot emit an empty report");
    std::ofstream os(path);
    if (!os) throw IoError("cannot open '" + path.string() + "' for writing");
    switch (format) {
        case ReportFormat::csv: report_to_csv(rows, os); break;
        case ReportFormat::json: os << report_to_json(rows).dump(2) << '\n'; break;
        case ReportFormat::markdown: report_to_markdown(rows, os); break;
    }
    if (!os) throw IoError("write to '" + path.string() + "' failed");
}

inline std::vector<ReportRow> load_report(const std::filesystem::path& path,
                                          ReportFormat format) {
    std::ifstream is(path);
    if (!is) throw IoError("cannot open '" + path.string() + "'");
    if (format == ReportFormat::csv) return report_from_csv(is);
    if (format == ReportFormat::json) {
        nlohmann::json j;
        try {
            is >> j;
        } catch (const nlohmann::json::exception& e) {
            throw DecodeError("'" + path.string() + "': " + e.what());
        }
        return report_from_json(j);
    }
    throw ValidationError("markdown reports are write-only");
}

// ------------------------------ mode comparison ------------------------------

// Applies a trained bundle inside the proactive simulator: the last k
// sealed blocks form the feature window. Until k blocks exist the
// predictor falls back to the last realized load (reactive warm-up).
class ModelPredictor final : public Predictor {
  public:
    explicit ModelPredictor(ModelBundle bundle) : bundle_(std::move(bundle)) {
        if (bundle_.k == 0)
            throw ValidationError("model bundle carries no window length");
        if (bundle_.use_hour_sentiment || bundle_.use_day_sentiment)
            throw ValidationError(
                "sentiment-trained models cannot drive a simulation; no live "
                "sentiment source exists there");
        if (model_input_dim(bundle_.model) != 2 * bundle_.k)
            throw ValidationError("model input width does not match 2k");
    }

    double predict_next_load(const PredictionContext& ctx) override {
        const std::size_t k = bundle_.k;
        if (ctx.history.size() < k) {
            if (ctx.history.empty() || ctx.params == nullptr) return 0.0;
            const BlockRecord& last = ctx.history.back();
            return normalized_load(last.gas_used,
                                   gas_target(last.gas_limit, *ctx.params));
        }
        std::vector<double> features;
        features.reserve(2 * k);
        const std::size_t n = ctx.history.size();
        for (std::size_t j = 0; j < k; ++j)
            features.push_back(alpha(ctx.history[n - k + j]));
        for (std::size_t j = 0; j < k; ++j)
            features.push_back(static_cast<double>(beta(ctx.history[n - k + j])));
        return predict_scaled(bundle_, std::move(features));
    }

  private:
    ModelBundle bundle_;
};

struct PredictorSpec {
    std::string kind = "perfect";  // perfect | zero | model
    std::filesystem::path model_path;
};

inline std::unique_ptr<Predictor> make_predictor(const PredictorSpec& spec) {
    if (spec.kind == "perfect") return std::make_unique<PerfectForesightPredictor>();
    if (spec.kind == "zero") return std::make_unique<ZeroPredictor>();
    if (spec.kind == "model") {
        if (spec.model_path.empty())
            throw ValidationError("model predictor requires a model file");
        return std::make_unique<ModelPredictor>(load_model(spec.model_path));
    }
    throw ValidationError("unknown predictor kind '" + spec.kind +
                          "' (expected perfect, zero, or model)");
}

struct TrajectorySummary {
    double mean_abs_load = 0.0;
    double max_abs_load = 0.0;
    Wei min_fee = 0;
    Wei max_fee = 0;
    double mean_fee = 0.0;
    Wei final_fee = 0;
};

inline TrajectorySummary summarize(const FeeTrajectory& traj) {
    if (traj.steps.empty()) throw ValidationError("cannot summarize an empty trajectory");
    TrajectorySummary s;
    s.min_fee = traj.steps.front().base_fee;
    s.max_fee = traj.steps.front().base_fee;
    double fee_total = 0.0;
    for (const FeeStep& step : traj.steps) {
        const double a = std::fabs(step.normalized_load);
        s.mean_abs_load += a;
        s.max_abs_load = std::max(s.max_abs_load, a);
        s.min_fee = std::min(s.min_fee, step.base_fee);
        s.max_fee = std::max(s.max_fee, step.base_fee);
        fee_total += static_cast<double>(step.base_fee);
    }
    s.mean_abs_load /= static_cast<double>(traj.steps.size());
    s.mean_fee = fee_total / static_cast<double>(traj.steps.size());
    s.final_fee = traj.final_fee;
    return s;
}

// Exact check that proactive mode with the oracle predictor reproduces the
// reactive trajectory advanced by one block. The identity is defined on
// fee-independent demand, so the check always runs the path at elasticity 0.
inline bool shift_by_one_holds(const DemandConfig& base, const MechanismParams& params,
                               Wei initial_fee) {
    DemandConfig config = base;
    config.elasticity = 0.0;
    const DemandModel demand(config);
    PerfectForesightPredictor oracle;
    const ProactiveResult pro = simulate_proactive(demand, oracle, params, initial_fee);

    BlockSequence shifted;
    shifted.records.reserve(config.horizon);
    for (std::uint64_t n = 1; n <= config.horizon; ++n)
        shifted.records.push_back({static_cast<std::int64_t>(n) * 12, n - 1,
                                   demand.gas_limit(),
                                   demand.gas_used(n, config.reference_fee), 1});
    const FeeTrajectory re = simulate_reactive(shifted, params, initial_fee);

    if (pro.trajectory.steps.size() != re.steps.size()) return false;
    for (std::size_t i = 0; i < re.steps.size(); ++i)
        if (pro.trajectory.steps[i].base_fee != re.steps[i].base_fee) return false;
    return pro.trajectory.final_fee == re.final_fee;
}

struct ComparisonReport {
    TrajectorySummary reactive;
    TrajectorySummary proactive;
    std::optional<bool> shift_check;  // present for the perfect predictor
};

inline ComparisonReport compare_mechanisms(const DemandConfig& demand_config,
                                           const PredictorSpec& predictor_spec,
                                           const MechanismParams& params,
                                           Wei initial_fee,
                                           const SimOptions& opts = {}) {
    const DemandModel demand(demand_config);
    const std::unique_ptr<Predictor> predictor = make_predictor(predictor_spec);
    const ClosedLoopResult reactive = simulate_reactive(demand, params, initial_fee, opts);
    const ProactiveResult proactive =
        simulate_proactive(demand, *predictor, params, initial_fee, opts);
    ComparisonReport report;
    report.reactive = summarize(reactive.trajectory);
    report.proactive = summarize(proactive.trajectory);
    if (predictor_spec.kind == "perfect")
        report.shift_check = shift_by_one_holds(demand_config, params, initial_fee);
    return report;
}

inline nlohmann::json to_json(const TrajectorySummary& s) {
    return {{"mean_abs_load", s.mean_abs_load}, {"max_abs_load", s.max_abs_load},
            {"min_fee", s.min_fee},             {"max_fee", s.max_fee},
            {"mean_fee", s.mean_fee},           {"final_fee", s.final_fee}};
}

inline nlohmann::json to_json(const ComparisonReport& r) {
    nlohmann::json out{{"reactive", to_json(r.reactive)},
                       {"proactive", to_json(r.proactive)}};
    if (r.shift_check) out["shift_by_one_exact"] = *r.shift_check;
    return out;
}

// ------------------------------ JSON configs ------------------------------

inline MechanismParams mechanism_from_json(const nlohmann::json& j) {
    MechanismParams params;
    if (j.contains("target_fraction")) {
        const auto& tf = j["target_fraction"];
        if (!tf.is_array() || tf.size() != 2)
            throw DecodeError("target_fraction must be [numerator, denominator]");
        params.target_fraction.num = tf[0].get<std::uint64_t>();
        params.target_fraction.den = tf[1].get<std::uint64_t>();
    }
    params.max_change_denominator =
        j.value("max_change_denominator", params.max_change_denominator);
    params.min_base_fee = j.value("min_base_fee", params.min_base_fee);
    params.validate();
    return params;
}

inline DemandConfig demand_from_json(const nlohmann::json& j) {
    DemandConfig config;
    config.kind = demand_kind_from_string(j.value("kind", "sinusoidal"));
    config.seed = j.value("seed", config.seed);
    config.horizon = j.value("horizon", config.horizon);
    config.elasticity = j.value("elasticity", config.elasticity);
    config.gas_limit = j.value("gas_limit", config.gas_limit);
    config.reference_fee = j.value("reference_fee", config.reference_fee);
    config.validate();
    return config;
}

inline PredictorSpec predictor_from_json(const nlohmann::json& j) {
    PredictorSpec spec;
    if (j.is_string()) {
        spec.kind = j.get<std::string>();
    } else if (j.is_object()) {
        spec.kind = j.value("kind", spec.kind);
        if (j.contains("model")) spec.model_path = j["model"].get<std::string>();
    } else {
        throw DecodeError("predictor must be a string or an object");
    }
    return spec;
}

inline TrainConfig train_config_from_json(const nlohmann::json& j,
                                          TrainConfig base = {}) {
    base.learning_rate = j.value("learning_rate", base.learning_rate);
    base.epochs = j.value("epochs", base.epochs);
    base.seed = j.value("seed", base.seed);
    base.lambda = j.value("lambda", base.lambda);
    base.grid_points = j.value("grid_points", base.grid_points);
    base.step_c = j.value("step_c", base.step_c);
    base.batch_size = j.value("batch_size", base.batch_size);
    if (j.contains("hidden_widths"))
        base.hidden_widths = j["hidden_widths"].get<std::vector<std::size_t>>();
    if (j.contains("activation"))
        base.activation = activation_from_string(j["activation"].get<std::string>());
    base.audit_contexts = j.value("audit_contexts", base.audit_contexts);
    base.validate();
    return base;
}

inline std::vector<ExperimentSpec> experiments_from_json(const nlohmann::json& root) {
    if (!root.is_object() || !root.contains("experiments") ||
        !root["experiments"].is_array())
        throw DecodeError("matrix config must carry an experiments array");
    std::vector<ExperimentSpec> specs;
    for (const auto& j : root["experiments"]) {
        ExperimentSpec spec;
        spec.period_label = j.value("period", std::string("period"));
        if (!j.contains("dataset"))
            throw DecodeError("experiment entry missing dataset path");
        spec.dataset_path = j["dataset"].get<std::string>();
        spec.k = j.value("k", spec.k);
        spec.use_day_sentiment = j.value("use_day_sentiment", false);
        spec.use_hour_sentiment = j.value("use_hour_sentiment", false);
        spec.model_kind = j.value("model", spec.model_kind);
        spec.trials = j.value("trials", spec.trials);
        spec.base_seed = j.value("seed", spec.base_seed);
        spec.train_fraction = j.value("train_fraction", spec.train_fraction);
        if (j.contains("train")) spec.train = train_config_from_json(j["train"], spec.train);
        spec.validate();
        specs.push_back(std::move(spec));
    }
    return specs;
}

}  // namespace gasforge
