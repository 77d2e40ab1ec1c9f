// gasforge: block ingestion, sentiment series, dataset assembly, model
// training, and base-fee simulation from one binary. Every subcommand is a
// thin shell over the library; all heavy lifting lives in the headers.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "gasforge/bench.hpp"
#include "gasforge/chain.hpp"
#include "gasforge/csv.hpp"
#include "gasforge/features.hpp"
#include "gasforge/models.hpp"
#include "gasforge/rpc.hpp"
#include "gasforge/sentiment.hpp"
#include "gasforge/simulate.hpp"

namespace {

using namespace gasforge;
namespace fs = std::filesystem;

nlohmann::json load_json(const fs::path& path) {
    std::ifstream is(path);
    if (!is) throw IoError("cannot open '" + path.string() + "'");
    nlohmann::json j;
    try {
        is >> j;
    } catch (const nlohmann::json::exception& e) {
        throw DecodeError("'" + path.string() + "': " + e.what());
    }
    return j;
}

SimOptions sim_options_from_json(const nlohmann::json& j) {
    SimOptions opts;
    opts.start_number = j.value("start_number", opts.start_number);
    opts.start_timestamp = j.value("start_timestamp", opts.start_timestamp);
    opts.block_seconds = j.value("block_seconds", opts.block_seconds);
    return opts;
}

struct SimulationConfig {
    MechanismParams params;
    std::optional<DemandConfig> demand;
    PredictorSpec predictor;
    Wei initial_fee = 1'000'000'000;
    SimOptions opts;
};

SimulationConfig simulation_from_json(const nlohmann::json& j) {
    SimulationConfig config;
    if (j.contains("mechanism")) config.params = mechanism_from_json(j["mechanism"]);
    if (j.contains("demand")) config.demand = demand_from_json(j["demand"]);
    if (j.contains("predictor")) config.predictor = predictor_from_json(j["predictor"]);
    config.initial_fee = j.value("initial_fee", config.initial_fee);
    if (j.contains("sim")) config.opts = sim_options_from_json(j["sim"]);
    return config;
}

// ------------------------------ ingest ------------------------------

struct IngestArgs {
    std::string rpc;
    std::uint64_t from = 0;
    std::uint64_t to = 0;
    std::string file;
    std::string out;
};

int run_ingest(const IngestArgs& args) {
    BlockSequence seq;
    if (!args.file.empty()) {
        seq = import_blocks(args.file);
    } else {
        RpcClient client(args.rpc);
        seq = client.fetch_range(args.from, args.to);
    }
    require_valid_chain(seq);
    std::cout << "ingested " << seq.size() << " blocks ["
              << seq.records.front().block_number << ".."
              << seq.records.back().block_number << "]\n";
    if (!args.out.empty()) {
        export_blocks(seq, args.out, block_format_from_path(args.out));
        std::cout << "blocks -> " << args.out << '\n';
    }
    return 0;
}

// ------------------------------ sentiment ------------------------------

struct SentimentArgs {
    std::string chat;
    std::string scores;
    std::string scorer = "lexicon";
    std::string interval = "hour";
    std::string out;
};

int run_sentiment(const SentimentArgs& args) {
    const Interval interval = interval_from_string(args.interval);
    SentimentSeries series;
    if (args.scorer == "lexicon") {
        if (args.chat.empty())
            throw ValidationError("--scorer lexicon requires --chat");
        const std::vector<Message> messages = parse_chat_export(args.chat);
        series = aggregate_messages(messages, LexiconScorer{}, interval);
        std::cout << "scored " << messages.size() << " messages\n";
    } else if (args.scorer == "file") {
        if (args.scores.empty())
            throw ValidationError("--scorer file requires --scores");
        const std::vector<TimedScore> scores = import_scores(args.scores);
        series = aggregate(scores, interval);
        std::cout << "imported " << scores.size() << " scores\n";
    } else {
        throw ValidationError("unknown scorer '" + args.scorer +
                              "' (expected lexicon or file)");
    }
    export_series(series, args.out);
    std::cout << "aggregated into " << series.buckets.size() << ' ' << args.interval
              << " chunks -> " << args.out << '\n';
    return 0;
}

// ------------------------------ featurize ------------------------------

struct FeaturizeArgs {
    std::string blocks;
    std::size_t k = 3;
    std::string hourly;
    std::string daily;
    std::string out;
};

int run_featurize(const FeaturizeArgs& args) {
    const BlockSequence seq = import_blocks(args.blocks);
    const AlignedDataset base = build_windows(seq, args.k);

    DatasetConfig flags;
    flags.use_hour_sentiment = !args.hourly.empty();
    flags.use_day_sentiment = !args.daily.empty();
    std::optional<SentimentSeries> hourly;
    std::optional<SentimentSeries> daily;
    if (flags.use_hour_sentiment) hourly = import_series(args.hourly);
    if (flags.use_day_sentiment) daily = import_series(args.daily);

    const AlignmentResult aligned =
        align_sentiment(base, hourly ? &*hourly : nullptr,
                        daily ? &*daily : nullptr, flags);
    export_dataset(aligned.dataset, args.out);
    std::cout << "built " << aligned.dataset.windows.size() << " windows (k=" << args.k
              << ", " << render_setting(flags.use_day_sentiment, flags.use_hour_sentiment)
              << "), dropped " << aligned.dropped_windows << " -> " << args.out << '\n';
    return 0;
}

// ------------------------------ train ------------------------------

struct TrainArgs {
    std::string dataset;
    std::string model_kind = "nam";
    bool monotonic = false;
    double train_fraction = 0.8;
    std::string out;
    std::string loss_out;
    std::string audit_out;
    TrainConfig train;
};

void write_loss_curve(const TrainHistory& history, const fs::path& path) {
    std::ofstream os(path);
    if (!os) throw IoError("cannot open '" + path.string() + "' for writing");
    os << "epoch,mse,violation\n";
    const std::size_t step1 = history.epoch_mse.size() - history.epoch_violation.size();
    for (std::size_t i = 0; i < history.epoch_mse.size(); ++i) {
        os << i << ',' << format_double(history.epoch_mse[i]) << ',';
        if (i >= step1) os << format_double(history.epoch_violation[i - step1]);
        os << '\n';
    }
    if (!os) throw IoError("write to '" + path.string() + "' failed");
}

// Adjacent-pair importance chain over the alpha lags: each more recent lag
// must matter at least as much as the one before it.
std::vector<MonotonicityConstraint> alpha_chain(std::size_t k) {
    std::vector<MonotonicityConstraint> chain;
    for (std::size_t j = 1; j < k; ++j) chain.push_back({j, j - 1});
    return chain;
}

int run_train(const TrainArgs& args) {
    const AlignedDataset dataset = import_dataset(args.dataset);
    const auto [train_set, test_set] = chronological_split(dataset, args.train_fraction);
    DesignMatrix train_dm = assemble_design(train_set, dataset.config);
    DesignMatrix test_dm = assemble_design(test_set, dataset.config);
    const FeatureScaling scaling = fit_scaling(train_dm.x, train_dm.columns);
    apply_scaling(train_dm.x, scaling);
    apply_scaling(test_dm.x, scaling);

    Model model;
    TrainHistory history;
    if (args.monotonic) {
        if (args.model_kind != "nam")
            throw ValidationError("--monotonic applies to the nam model kind only");
        if (dataset.k < 2)
            throw ValidationError("the importance chain needs at least two lags");
        const std::vector<MonotonicityConstraint> chain = alpha_chain(dataset.k);
        const MonotonicNamFit fit =
            fit_nam_monotonic(train_dm.x, train_dm.y, args.train, chain);
        model = Model(fit.model);
        history = fit.history;
        std::cout << "audited violation " << format_double(fit.final_violation)
                  << (fit.zero_violation ? " (zero reached" : " (budget exhausted")
                  << " after " << fit.step2_epochs << " constrained epochs)\n";
        if (!args.audit_out.empty()) {
            const Matrix contexts = sample_rows(train_dm.x, args.train.audit_contexts,
                                                args.train.seed ^ 0x9e3779b97f4a7c15ULL);
            const fs::path base_path(args.audit_out);
            for (std::size_t i = 0; i < chain.size(); ++i) {
                fs::path path = base_path;
                if (chain.size() > 1) {
                    path = base_path.parent_path() /
                           (base_path.stem().string() + "_" + std::to_string(i) +
                            base_path.extension().string());
                }
                write_violation_report(model, chain[i], args.train.grid_points,
                                       args.train.step_c, contexts, path);
                std::cout << "audit (alpha_" << chain[i].lesser_index + 1 << " vs alpha_"
                          << chain[i].important_index + 1 << ") -> " << path << '\n';
            }
        }
    } else if (args.model_kind == "mlp") {
        MlpFit fit = fit_mlp(train_dm.x, train_dm.y, args.train);
        model = Model(std::move(fit.model));
        history = std::move(fit.history);
    } else if (args.model_kind == "nam") {
        NamFit fit = fit_nam(train_dm.x, train_dm.y, args.train);
        model = Model(std::move(fit.model));
        history = std::move(fit.history);
    } else {
        model = ModelRegistry::instance().train(args.model_kind, train_dm.x,
                                                train_dm.y, args.train);
    }

    std::cout << "train mse " << format_double(mse(predict(model, train_dm.x), train_dm.y))
              << ", test mse " << format_double(mse(predict(model, test_dm.x), test_dm.y))
              << " (" << train_dm.x.rows << "/" << test_dm.x.rows << " rows)\n";

    ModelBundle bundle;
    bundle.model = std::move(model);
    bundle.scaling = scaling;
    bundle.k = dataset.k;
    bundle.use_hour_sentiment = dataset.config.use_hour_sentiment;
    bundle.use_day_sentiment = dataset.config.use_day_sentiment;
    save_model(bundle, args.out);
    std::cout << "model -> " << args.out << '\n';

    if (!args.loss_out.empty()) {
        if (history.epoch_mse.empty())
            throw ValidationError("'" + args.model_kind + "' records no loss curve");
        write_loss_curve(history, args.loss_out);
        std::cout << "loss curve -> " << args.loss_out << '\n';
    }
    return 0;
}

// ------------------------------ evaluate ------------------------------

struct EvaluateArgs {
    std::string dataset;
    std::string model;
    double train_fraction = 0.8;
    bool full = false;
    std::string pred_out;
};

int run_evaluate(const EvaluateArgs& args) {
    const ModelBundle bundle = load_model(args.model);
    const AlignedDataset dataset = import_dataset(args.dataset);
    if (dataset.k != bundle.k)
        throw ValidationError("dataset window length " + std::to_string(dataset.k) +
                              " does not match the model's " + std::to_string(bundle.k));
    DatasetConfig flags;
    flags.use_hour_sentiment = bundle.use_hour_sentiment;
    flags.use_day_sentiment = bundle.use_day_sentiment;
    const AlignedDataset eval_set =
        args.full ? dataset : chronological_split(dataset, args.train_fraction).second;
    const DesignMatrix dm = assemble_design(eval_set, flags);
    if (dm.x.cols != model_input_dim(bundle.model))
        throw ValidationError("assembled features do not match the model input width");

    std::vector<double> predicted;
    predicted.reserve(dm.x.rows);
    for (std::size_t r = 0; r < dm.x.rows; ++r) {
        const auto row = dm.x.row(r);
        predicted.push_back(predict_scaled(bundle, {row.begin(), row.end()}));
    }
    std::cout << "test mse " << format_double(mse(predicted, dm.y)) << " over "
              << dm.x.rows << " rows\n";

    if (!args.pred_out.empty()) {
        std::ofstream os(args.pred_out);
        if (!os) throw IoError("cannot open '" + args.pred_out + "' for writing");
        os << "index,actual,predicted\n";
        for (std::size_t r = 0; r < dm.x.rows; ++r)
            os << r << ',' << format_double(dm.y[r]) << ','
               << format_double(predicted[r]) << '\n';
        if (!os) throw IoError("write to '" + args.pred_out + "' failed");
        std::cout << "prediction overlay -> " << args.pred_out << '\n';
    }
    return 0;
}

// ------------------------------ matrix ------------------------------

struct MatrixArgs {
    std::string config;
    std::string out;
    std::string format = "markdown";
    unsigned workers = 1;
};

int run_matrix_cmd(const MatrixArgs& args) {
    const std::vector<ExperimentSpec> specs = experiments_from_json(load_json(args.config));
    const MatrixResult result = run_matrix(specs, args.workers);
    for (const CellFailure& f : result.failures)
        std::cerr << "cell " << f.period << "/k=" << f.k << "/" << f.setting
                  << " failed: " << f.message << '\n';
    if (!result.rows.empty()) {
        emit_report(result.rows, args.out, report_format_from_string(args.format));
        std::cout << result.rows.size() << "/" << specs.size() << " cells -> "
                  << args.out << '\n';
    }
    return result.failures.empty() ? 0 : 1;
}

// ------------------------------ simulate / compare ------------------------------

struct SimulateArgs {
    std::string mode = "reactive";
    std::string params;
    std::string blocks;
    std::string out;
    std::string blocks_out;
};

int run_simulate(const SimulateArgs& args) {
    const SimulationConfig config = simulation_from_json(load_json(args.params));
    FeeTrajectory trajectory;
    std::optional<BlockSequence> emitted;
    if (args.mode == "reactive" && !args.blocks.empty()) {
        const BlockSequence seq = import_blocks(args.blocks);
        trajectory = simulate_reactive(seq, config.params, config.initial_fee);
    } else {
        if (!config.demand)
            throw ValidationError("config must carry a demand section (or pass --blocks)");
        const DemandModel demand(*config.demand);
        if (args.mode == "reactive") {
            ClosedLoopResult result =
                simulate_reactive(demand, config.params, config.initial_fee, config.opts);
            trajectory = std::move(result.trajectory);
            emitted = std::move(result.blocks);
        } else if (args.mode == "proactive") {
            const auto predictor = make_predictor(config.predictor);
            ProactiveResult result = simulate_proactive(demand, *predictor, config.params,
                                                        config.initial_fee, config.opts);
            trajectory = std::move(result.trajectory);
            emitted = std::move(result.blocks);
        } else {
            throw ValidationError("unknown mode '" + args.mode +
                                  "' (expected reactive or proactive)");
        }
    }
    export_trajectory(trajectory, args.out);
    const TrajectorySummary summary = summarize(trajectory);
    std::cout << "simulated " << trajectory.steps.size() << " blocks (" << args.mode
              << "), mean |y| " << format_double(summary.mean_abs_load) << ", final fee "
              << summary.final_fee << "\ntrajectory -> " << args.out << '\n';
    if (!args.blocks_out.empty()) {
        if (!emitted)
            throw ValidationError("--blocks-out applies to closed-loop runs only");
        export_blocks(*emitted, args.blocks_out, block_format_from_path(args.blocks_out));
        std::cout << "blocks -> " << args.blocks_out << '\n';
    }
    return 0;
}

struct CompareArgs {
    std::string params;
    std::string out;
};

int run_compare(const CompareArgs& args) {
    const SimulationConfig config = simulation_from_json(load_json(args.params));
    if (!config.demand)
        throw ValidationError("config must carry a demand section");
    const ComparisonReport report = compare_mechanisms(*config.demand, config.predictor,
                                                       config.params, config.initial_fee,
                                                       config.opts);
    const std::string text = to_json(report).dump(2);
    if (args.out.empty()) {
        std::cout << text << '\n';
    } else {
        std::ofstream os(args.out);
        if (!os) throw IoError("cannot open '" + args.out + "' for writing");
        os << text << '\n';
        if (!os) throw IoError("write to '" + args.out + "' failed");
        std::cout << "comparison -> " << args.out << '\n';
    }
    return 0;
}

// ------------------------------ report ------------------------------

struct ReportArgs {
    std::string in;
    std::string in_format = "csv";
    std::string out;
    std::string format = "markdown";
};

int run_report(const ReportArgs& args) {
    const std::vector<ReportRow> rows =
        load_report(args.in, report_format_from_string(args.in_format));
    emit_report(rows, args.out, report_format_from_string(args.format));
    std::cout << "report (" << rows.size() << " rows) -> " << args.out << '\n';
    return 0;
}

void add_train_options(CLI::App* cmd, TrainConfig& train) {
    cmd->add_option("--lr", train.learning_rate, "gradient step size");
    cmd->add_option("--epochs", train.epochs, "training epochs");
    cmd->add_option("--seed", train.seed, "rng seed");
    cmd->add_option("--lambda", train.lambda, "monotonicity penalty weight");
    cmd->add_option("--grid-points", train.grid_points, "audit grid resolution");
    cmd->add_option("--step-c", train.step_c, "audit perturbation step");
    cmd->add_option("--batch-size", train.batch_size, "mini-batch size");
    cmd->add_option("--widths", train.hidden_widths, "hidden layer widths");
    cmd->add_option("--audit-contexts", train.audit_contexts, "audit context rows");
    cmd->add_option_function<std::string>(
        "--activation",
        [&train](const std::string& name) { train.activation = activation_from_string(name); },
        "tanh | sigmoid | softplus");
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"gas demand forecasting and base-fee simulation toolkit"};
    app.require_subcommand(1);

    IngestArgs ingest;
    CLI::App* ingest_cmd = app.add_subcommand("ingest", "fetch or convert block headers");
    ingest_cmd->add_option("--rpc", ingest.rpc, "JSON-RPC endpoint url");
    ingest_cmd->add_option("--from", ingest.from, "first block number");
    ingest_cmd->add_option("--to", ingest.to, "last block number");
    ingest_cmd->add_option("--file", ingest.file, "block file (.csv or .jsonl)");
    ingest_cmd->add_option("--out", ingest.out, "output block file");

    SentimentArgs sentiment;
    CLI::App* sentiment_cmd =
        app.add_subcommand("sentiment", "build a chunked sentiment series");
    sentiment_cmd->add_option("--chat", sentiment.chat, "DiscordChatExporter JSON dump");
    sentiment_cmd->add_option("--scores", sentiment.scores, "per-message score CSV");
    sentiment_cmd->add_option("--scorer", sentiment.scorer, "lexicon | file");
    sentiment_cmd->add_option("--interval", sentiment.interval, "hour | day");
    sentiment_cmd->add_option("--out", sentiment.out, "series CSV")->required();

    FeaturizeArgs featurize;
    CLI::App* featurize_cmd =
        app.add_subcommand("featurize", "assemble a leak-free supervised dataset");
    featurize_cmd->add_option("--blocks", featurize.blocks, "block file")->required();
    featurize_cmd->add_option("--k", featurize.k, "window length");
    featurize_cmd->add_option("--hourly", featurize.hourly, "hourly sentiment series");
    featurize_cmd->add_option("--daily", featurize.daily, "daily sentiment series");
    featurize_cmd->add_option("--out", featurize.out, "dataset CSV")->required();

    TrainArgs train;
    CLI::App* train_cmd = app.add_subcommand("train", "fit a forecaster on a dataset");
    train_cmd->add_option("--dataset", train.dataset, "dataset CSV")->required();
    train_cmd->add_option("--model", train.model_kind, "linear | mlp | nam");
    train_cmd->add_flag("--monotonic", train.monotonic,
                        "train the nam under the alpha importance chain");
    train_cmd->add_option("--train-fraction", train.train_fraction,
                          "chronological split point");
    train_cmd->add_option("--out", train.out, "model file")->required();
    train_cmd->add_option("--loss-out", train.loss_out, "loss curve CSV");
    train_cmd->add_option("--audit-out", train.audit_out, "violation audit CSV");
    add_train_options(train_cmd, train.train);

    EvaluateArgs evaluate;
    CLI::App* evaluate_cmd =
        app.add_subcommand("evaluate", "score a trained model on a dataset");
    evaluate_cmd->add_option("--dataset", evaluate.dataset, "dataset CSV")->required();
    evaluate_cmd->add_option("--model", evaluate.model, "model file")->required();
    evaluate_cmd->add_option("--train-fraction", evaluate.train_fraction,
                             "chronological split point");
    evaluate_cmd->add_flag("--full", evaluate.full, "evaluate every window, not the tail");
    evaluate_cmd->add_option("--pred-out", evaluate.pred_out,
                             "prediction-vs-actual overlay CSV");

    MatrixArgs matrix;
    CLI::App* matrix_cmd = app.add_subcommand("matrix", "run an experiment grid");
    matrix_cmd->add_option("--config", matrix.config, "experiments JSON")->required();
    matrix_cmd->add_option("--out", matrix.out, "report file")->required();
    matrix_cmd->add_option("--format", matrix.format, "csv | json | markdown");
    matrix_cmd->add_option("--workers", matrix.workers, "parallel cells");

    SimulateArgs simulate;
    CLI::App* simulate_cmd = app.add_subcommand("simulate", "run the fee mechanism");
    simulate_cmd->add_option("--mode", simulate.mode, "reactive | proactive");
    simulate_cmd->add_option("--params", simulate.params, "simulation JSON")->required();
    simulate_cmd->add_option("--blocks", simulate.blocks,
                             "replay a recorded chain (reactive only)");
    simulate_cmd->add_option("--out", simulate.out, "trajectory CSV")->required();
    simulate_cmd->add_option("--blocks-out", simulate.blocks_out,
                             "emit the synthesized chain");

    CompareArgs compare;
    CLI::App* compare_cmd =
        app.add_subcommand("compare", "reactive vs proactive on one demand path");
    compare_cmd->add_option("--params", compare.params, "simulation JSON")->required();
    compare_cmd->add_option("--out", compare.out, "comparison JSON");

    ReportArgs report;
    CLI::App* report_cmd = app.add_subcommand("report", "convert report formats");
    report_cmd->add_option("--in", report.in, "input report")->required();
    report_cmd->add_option("--in-format", report.in_format, "csv | json");
    report_cmd->add_option("--out", report.out, "output report")->required();
    report_cmd->add_option("--format", report.format, "csv | json | markdown");

    CLI11_PARSE(app, argc, argv);

    try {
        if (ingest_cmd->parsed()) {
            if (ingest.file.empty() && ingest.rpc.empty())
                throw ValidationError("ingest needs --rpc or --file");
            if (!ingest.rpc.empty() && ingest.out.empty())
                throw ValidationError("--rpc ingestion requires --out");
            return run_ingest(ingest);
        }
        if (sentiment_cmd->parsed()) return run_sentiment(sentiment);
        if (featurize_cmd->parsed()) return run_featurize(featurize);
        if (train_cmd->parsed()) return run_train(train);
        if (evaluate_cmd->parsed()) return run_evaluate(evaluate);
        if (matrix_cmd->parsed()) return run_matrix_cmd(matrix);
        if (simulate_cmd->parsed()) return run_simulate(simulate);
        if (compare_cmd->parsed()) return run_compare(compare);
        if (report_cmd->parsed()) return run_report(report);
    } catch (const std::exception& e) {
        std::cerr << "gasforge: error: " << e.what() << '\n';
        return 1;
    }
    return 0;
}
