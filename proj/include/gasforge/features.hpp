#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "gasforge/chain.hpp"
#include "gasforge/csv.hpp"
#include "gasforge/errors.hpp"
#include "gasforge/mechanism.hpp"
#include "gasforge/sentiment.hpp"
#include "gasforge/timeutil.hpp"

namespace gasforge {

// Supervised windows over a block sequence: k consecutive blocks of
// features predict the normalized load of the block immediately after
// them. Sentiment joins through the last completed chunk strictly before
// the window's anchor, so no feature can see past the prediction point.

inline double alpha(const BlockRecord& b) {
    validate_record(b);
    return static_cast<double>(b.gas_used) / static_cast<double>(b.gas_limit);
}

inline Wei beta(const BlockRecord& b) {
    validate_record(b);
    return b.base_fee;
}

struct FeatureWindow {
    std::vector<double> alphas;   // oldest first, size k
    std::vector<Wei> betas;       // oldest first, size k
    std::optional<SentimentScore> gamma_hour;
    std::optional<SentimentScore> gamma_day;
    double target_y = 0.0;                 // normalized load of the block after the window
    std::int64_t anchor_timestamp = 0;     // timestamp of the newest feature block

    bool operator==(const FeatureWindow&) const = default;
};

struct DatasetConfig {
    bool use_hour_sentiment = false;
    bool use_day_sentiment = false;

    bool operator==(const DatasetConfig&) const = default;
};

struct AlignedDataset {
    std::size_t k = 0;
    DatasetConfig config;
    std::vector<FeatureWindow> windows;

    bool operator==(const AlignedDataset&) const = default;
};

// ------------------------------ window construction ------------------------------

// One window per position: blocks [i, i+k) supply features, block i+k
// supplies the target. Requires a valid chain of at least k+1 blocks.
inline AlignedDataset build_windows(const BlockSequence& seq, std::size_t k,
                                    const MechanismParams& params = {}) {
    params.validate();
    if (k == 0) throw ValidationError("window length k must be >= 1");
    require_valid_chain(seq);
    if (seq.size() < k + 1)
        throw ValidationError("need at least k + 1 = " + std::to_string(k + 1) +
                              " blocks, got " + std::to_string(seq.size()));
    AlignedDataset dataset;
    dataset.k = k;
    dataset.windows.reserve(seq.size() - k);
    for (std::size_t i = 0; i + k < seq.size(); ++i) {
        FeatureWindow w;
        w.alphas.reserve(k);
        w.betas.reserve(k);
        for (std::size_t j = 0; j < k; ++j) {
            w.alphas.push_back(alpha(seq[i + j]));
            w.betas.push_back(beta(seq[i + j]));
        }
        const BlockRecord& target = seq[i + k];
        try {
            w.target_y =
                normalized_load(target.gas_used, gas_target(target.gas_limit, params));
        } catch (const DomainError& e) {
            throw DomainError("block " + std::to_string(target.block_number) + ": " +
                              e.what());
        }
        w.anchor_timestamp = seq[i + k - 1].timestamp;
        dataset.windows.push_back(std::move(w));
    }
    return dataset;
}

// Exponential smoothing: s_0 = x_0, s_t = C * (x_t - s_{t-1}) + s_{t-1}.
inline std::vector<double> ema(std::span<const double> values, double c) {
    if (!(c > 0.0 && c <= 1.0))
        throw ValidationError("smoothing constant must lie in (0, 1]");
    if (values.empty()) throw ValidationError("cannot smooth an empty series");
    std::vector<double> out(values.size());
    out[0] = values[0];
    for (std::size_t t = 1; t < values.size(); ++t)
        out[t] = c * (values[t] - out[t - 1]) + out[t - 1];
    return out;
}

// ------------------------------ sentiment alignment ------------------------------

struct AlignmentResult {
    AlignedDataset dataset;
    std::size_t dropped_windows = 0;
};

// Attaches chunked sentiment to each window. A window reads the most
// recent chunk that completed strictly before its anchor timestamp; if a
// required chunk has no bucket, the window is dropped rather than filled.
inline AlignmentResult align_sentiment(const AlignedDataset& input,
                                       const SentimentSeries* hourly,
                                       const SentimentSeries* daily,
                                       const DatasetConfig& flags) {
    if (flags.use_hour_sentiment) {
        if (hourly == nullptr || hourly->buckets.empty())
            throw ValidationError("hourly sentiment requested but the series is empty");
        if (hourly->interval != Interval::hour)
            throw ValidationError("hourly series has the wrong interval");
    }
    if (flags.use_day_sentiment) {
        if (daily == nullptr || daily->buckets.empty())
            throw ValidationError("daily sentiment requested but the series is empty");
        if (daily->interval != Interval::day)
            throw ValidationError("daily series has the wrong interval");
    }
    AlignmentResult result;
    result.dataset.k = input.k;
    result.dataset.config = flags;
    for (const FeatureWindow& w : input.windows) {
        FeatureWindow out = w;
        out.gamma_hour.reset();
        out.gamma_day.reset();
        bool keep = true;
        if (flags.use_hour_sentiment) {
            const std::int64_t chunk =
                preceding_chunk_start(w.anchor_timestamp, interval_seconds(Interval::hour));
            const SentimentBucket* bucket = hourly->find(chunk);
            if (bucket == nullptr)
                keep = false;
            else
                out.gamma_hour = bucket->mean;
        }
        if (keep && flags.use_day_sentiment) {
            const std::int64_t chunk =
                preceding_chunk_start(w.anchor_timestamp, interval_seconds(Interval::day));
            const SentimentBucket* bucket = daily->find(chunk);
            if (bucket == nullptr)
                keep = false;
            else
                out.gamma_day = bucket->mean;
        }
        if (keep)
            result.dataset.windows.push_back(std::move(out));
        else
            ++result.dropped_windows;
    }
    return result;
}

// ------------------------------ splitting ------------------------------

// Order-preserving prefix/suffix split: the first floor(n * train_fraction)
// windows train, the rest test. Both sides must be non-empty.
inline std::pair<AlignedDataset, AlignedDataset> chronological_split(
    const AlignedDataset& dataset, double train_fraction) {
    if (!(train_fraction > 0.0 && train_fraction < 1.0))
        throw ValidationError("train_fraction must lie in (0, 1)");
    const std::size_t n = dataset.windows.size();
    const auto n_train = static_cast<std::size_t>(
        std::floor(static_cast<double>(n) * train_fraction));
    if (n_train == 0 || n_train == n)
        throw ValidationError("split leaves an empty side (n = " + std::to_string(n) +
                              ", fraction = " + std::to_string(train_fraction) + ")");
    AlignedDataset train{dataset.k, dataset.config, {}};
    AlignedDataset test{dataset.k, dataset.config, {}};
    train.windows.assign(dataset.windows.begin(),
                         dataset.windows.begin() + static_cast<std::ptrdiff_t>(n_train));
    test.windows.assign(dataset.windows.begin() + static_cast<std::ptrdiff_t>(n_train),
                        dataset.windows.end());
    return {std::move(train), std::move(test)};
}

// ------------------------------ dataset files ------------------------------

namespace detail {

inline std::vector<std::string> dataset_columns(std::size_t k, const DatasetConfig& c) {
    std::vector<std::string> cols;
    for (std::size_t i = 1; i <= k; ++i) cols.push_back("alpha_" + std::to_string(i));
    for (std::size_t i = 1; i <= k; ++i) cols.push_back("beta_" + std::to_string(i));
    if (c.use_hour_sentiment) {
        cols.emplace_back("gh_pos");
        cols.emplace_back("gh_neg");
        cols.emplace_back("gh_neu");
    }
    if (c.use_day_sentiment) {
        cols.emplace_back("gd_pos");
        cols.emplace_back("gd_neg");
        cols.emplace_back("gd_neu");
    }
    cols.emplace_back("target_y");
    return cols;
}

}  // namespace detail

// Writes `<path>` as CSV plus a `<path>.meta.json` sidecar recording the
// window length and sentiment flags.
inline void export_dataset(const AlignedDataset& dataset,
                           const std::filesystem::path& path) {
    if (dataset.k == 0) throw ValidationError("dataset has no window length");
    std::ofstream os(path);
    if (!os) throw IoError("cannot open '" + path.string() + "' for writing");
    const auto cols = detail::dataset_columns(dataset.k, dataset.config);
    for (std::size_t i = 0; i < cols.size(); ++i) {
        if (i > 0) os.put(',');
        os << cols[i];
    }
    os.put('\n');
    for (const FeatureWindow& w : dataset.windows) {
        if (w.alphas.size() != dataset.k || w.betas.size() != dataset.k)
            throw ValidationError("window length disagrees with dataset k");
        for (double a : w.alphas) os << format_double(a) << ',';
        for (Wei b : w.betas) os << b << ',';
        if (dataset.config.use_hour_sentiment) {
            if (!w.gamma_hour) throw ValidationError("window missing hourly sentiment");
            os << format_double(w.gamma_hour->p_pos) << ','
               << format_double(w.gamma_hour->p_neg) << ','
               << format_double(w.gamma_hour->p_neu) << ',';
        }
        if (dataset.config.use_day_sentiment) {
            if (!w.gamma_day) throw ValidationError("window missing daily sentiment");
            os << format_double(w.gamma_day->p_pos) << ','
               << format_double(w.gamma_day->p_neg) << ','
               << format_double(w.gamma_day->p_neu) << ',';
        }
        os << format_double(w.target_y) << '\n';
    }
    if (!os) throw IoError("write to '" + path.string() + "' failed");

    nlohmann::json meta{{"k", dataset.k},
                        {"use_hour_sentiment", dataset.config.use_hour_sentiment},
                        {"use_day_sentiment", dataset.config.use_day_sentiment},
                        {"rows", dataset.windows.size()}};
    std::ofstream ms(path.string() + ".meta.json");
    if (!ms) throw IoError("cannot write dataset sidecar");
    ms << meta.dump(2) << '\n';
}

// Reads a dataset CSV; the header is self-describing, so the sidecar is
// optional and only cross-checked when present. Anchor timestamps are not
// part of the format and come back as zero.
inline AlignedDataset import_dataset(const std::filesystem::path& path) {
    std::ifstream is(path);
    if (!is) throw IoError("cannot open '" + path.string() + "'");
    CsvReader reader(is);
    auto header = reader.next_row();
    if (!header) throw ValidationError("'" + path.string() + "' is empty");

    std::size_t k = 0;
    DatasetConfig config;
    {
        std::size_t pos = 0;
        const auto& h = *header;
        while (pos < h.size() && h[pos] == "alpha_" + std::to_string(pos + 1)) ++pos;
        k = pos;
        if (k == 0) throw ValidationError("dataset header missing alpha columns");
        for (std::size_t i = 1; i <= k; ++i, ++pos)
            if (pos >= h.size() || h[pos] != "beta_" + std::to_string(i))
                throw ValidationError("dataset header missing beta_" + std::to_string(i));
        auto triple = [&](const char* a, const char* b, const char* c) {
            if (pos + 2 < h.size() && h[pos] == a && h[pos + 1] == b && h[pos + 2] == c) {
                pos += 3;
                return true;
            }
            return false;
        };
        config.use_hour_sentiment = triple("gh_pos", "gh_neg", "gh_neu");
        config.use_day_sentiment = triple("gd_pos", "gd_neg", "gd_neu");
        if (pos + 1 != h.size() || h[pos] != "target_y")
            throw ValidationError("dataset header must end with target_y");
    }

    AlignedDataset dataset;
    dataset.k = k;
    dataset.config = config;
    const std::size_t expected = header->size();
    while (auto row = reader.next_row()) {
        if (row->size() == 1 && (*row)[0].empty()) continue;
        const std::size_t line = reader.row_line();
        if (row->size() != expected)
            throw ValidationError("line " + std::to_string(line) + ": expected " +
                                  std::to_string(expected) + " fields, got " +
                                  std::to_string(row->size()));
        FeatureWindow w;
        std::size_t pos = 0;
        for (std::size_t i = 0; i < k; ++i) {
            const double a = parse_double((*row)[pos], "alpha", line);
            if (!(a >= 0.0 && a <= 1.0))
                throw ValidationError("line " + std::to_string(line) +
                                      ": alpha outside [0, 1]");
            w.alphas.push_back(a);
            ++pos;
        }
        for (std::size_t i = 0; i < k; ++i) {
            w.betas.push_back(parse_integer<Wei>((*row)[pos], "beta", line));
            ++pos;
        }
        auto read_triple = [&](const char* what) {
            SentimentScore s;
            s.p_pos = parse_double((*row)[pos], what, line);
            s.p_neg = parse_double((*row)[pos + 1], what, line);
            s.p_neu = parse_double((*row)[pos + 2], what, line);
            pos += 3;
            try {
                validate_score(s);
            } catch (const ValidationError& e) {
                throw ValidationError("line " + std::to_string(line) + ": " + e.what());
            }
            return s;
        };
        if (config.use_hour_sentiment) w.gamma_hour = read_triple("hourly sentiment");
        if (config.use_day_sentiment) w.gamma_day = read_triple("daily sentiment");
        w.target_y = parse_double((*row)[pos], "target_y", line);
        if (!(w.target_y >= -1.0 && w.target_y <= 1.0))
            throw ValidationError("line " + std::to_string(line) +
                                  ": target_y outside [-1, 1]");
        dataset.windows.push_back(std::move(w));
    }

    const std::filesystem::path sidecar(path.string() + ".meta.json");
    if (std::filesystem::exists(sidecar)) {
        std::ifstream ms(sidecar);
        nlohmann::json meta;
        try {
            meta = nlohmann::json::parse(ms);
        } catch (const nlohmann::json::exception& e) {
            throw DecodeError("'" + sidecar.string() + "': " + e.what());
        }
        if (meta.value("k", k) != k ||
            meta.value("use_hour_sentiment", config.use_hour_sentiment) !=
                config.use_hour_sentiment ||
            meta.value("use_day_sentiment", config.use_day_sentiment) !=
                config.use_day_sentiment)
            throw ValidationError("dataset sidecar disagrees with CSV header");
    }
    return dataset;
}

}  // namespace gasforge
