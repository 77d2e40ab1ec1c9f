#pragma once

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_set>
#include <vector>

#include <json.hpp>

#include "gasforge/csv.hpp"
#include "gasforge/errors.hpp"
#include "gasforge/timeutil.hpp"

namespace gasforge {

// Discussion sentiment: messages are scored onto the probability simplex
// (positive, negative, neutral), then averaged into fixed UTC wall-clock
// chunks so each chunk summarizes one hour or one day of discussion.

struct SentimentScore {
    double p_pos = 0.0;
    double p_neg = 0.0;
    double p_neu = 1.0;

    bool operator==(const SentimentScore&) const = default;
};

inline constexpr double kSimplexTolerance = 1e-6;

inline void validate_score(const SentimentScore& s) {
    const double values[] = {s.p_pos, s.p_neg, s.p_neu};
    for (double v : values) {
        if (!(v >= 0.0 && v <= 1.0))
            throw ValidationError("sentiment component " + std::to_string(v) +
                                  " outside [0, 1]");
    }
    const double sum = s.p_pos + s.p_neg + s.p_neu;
    if (std::fabs(sum - 1.0) > kSimplexTolerance)
        throw ValidationError("sentiment components sum to " + std::to_string(sum) +
                              ", expected 1");
}

struct Message {
    std::int64_t timestamp = 0;  // unix seconds
    std::string channel;
    std::string text;            // non-empty
};

// ------------------------------ scoring ------------------------------

using Scorer = std::function<SentimentScore(std::string_view)>;

// Wraps a scorer call with contract checks on both sides.
inline SentimentScore score_message(std::string_view text, const Scorer& scorer) {
    if (text.empty()) throw ValidationError("cannot score an empty message");
    const SentimentScore score = scorer(text);
    validate_score(score);
    return score;
}

// Deterministic keyword scorer. Tokens are lowercased alphanumeric runs;
// positive and negative hit counts feed a softmax against a neutral logit
// of zero, and a message with no hits is exactly neutral.
class LexiconScorer {
  public:
    SentimentScore operator()(std::string_view text) const {
        std::size_t pos_hits = 0;
        std::size_t neg_hits = 0;
        std::string token;
        auto flush = [&] {
            if (token.empty()) return;
            if (positive_.count(token)) ++pos_hits;
            if (negative_.count(token)) ++neg_hits;
            token.clear();
        };
        for (char c : text) {
            const auto uc = static_cast<unsigned char>(c);
            if (std::isalnum(uc)) {
                token.push_back(static_cast<char>(std::tolower(uc)));
            } else {
                flush();
            }
        }
        flush();
        if (pos_hits == 0 && neg_hits == 0) return {0.0, 0.0, 1.0};
        const double zp = static_cast<double>(pos_hits);
        const double zn = static_cast<double>(neg_hits);
        const double zmax = std::max({zp, zn, 0.0});
        const double ep = std::exp(zp - zmax);
        const double en = std::exp(zn - zmax);
        const double eu = std::exp(0.0 - zmax);
        const double total = ep + en + eu;
        return {ep / total, en / total, eu / total};
    }

  private:
    const std::unordered_set<std::string> positive_ = {
        "bullish", "moon",   "pump",  "rally",  "surge",    "gain",
        "gains",   "profit", "up",    "green",  "buy",      "long",
        "good",    "great",  "win",   "strong", "breakout", "growth",
        "adoption"};
    const std::unordered_set<std::string> negative_ = {
        "bearish", "dump", "crash", "rekt",  "loss", "losses", "down",
        "red",     "sell", "short", "bad",   "fear", "fud",    "scam",
        "rug",     "panic", "weak", "drop",  "bleed", "exploit", "hack"};
};

// ------------------------------ chat export import ------------------------------

// Reads a DiscordChatExporter JSON dump: a root object whose "messages"
// array carries ISO 8601 timestamps and message content. Messages with
// empty content (stickers, bare attachments) are skipped.
inline std::vector<Message> parse_chat_export(const std::filesystem::path& path) {
    std::ifstream is(path);
    if (!is) throw IoError("cannot open '" + path.string() + "'");
    nlohmann::json root;
    try {
        root = nlohmann::json::parse(is);
    } catch (const nlohmann::json::exception& e) {
        throw DecodeError("'" + path.string() + "': " + e.what());
    }
    if (!root.is_object() || !root.contains("messages") || !root["messages"].is_array())
        throw DecodeError("'" + path.string() + "': missing messages array");
    std::string channel;
    if (root.contains("channel") && root["channel"].is_object()) {
        const auto& ch = root["channel"];
        if (ch.contains("name") && ch["name"].is_string())
            channel = ch["name"].get<std::string>();
    }
    std::vector<Message> messages;
    for (const auto& m : root["messages"]) {
        if (!m.is_object())
            throw DecodeError("'" + path.string() + "': message is not an object");
        std::string content;
        if (m.contains("content") && m["content"].is_string())
            content = m["content"].get<std::string>();
        if (content.empty()) continue;
        if (!m.contains("timestamp") || !m["timestamp"].is_string())
            throw DecodeError("'" + path.string() + "': message missing timestamp");
        Message out;
        out.timestamp = parse_iso8601(m["timestamp"].get<std::string>());
        out.channel = channel;
        out.text = std::move(content);
        messages.push_back(std::move(out));
    }
    return messages;
}

// ------------------------------ score files ------------------------------

struct TimedScore {
    std::int64_t timestamp = 0;
    SentimentScore score;

    bool operator==(const TimedScore&) const = default;
};

inline constexpr std::string_view kScoreCsvHeader = "timestamp,p_pos,p_neg,p_neu";

inline void export_scores(std::span<const TimedScore> scores,
                          const std::filesystem::path& path) {
    std::ofstream os(path);
    if (!os) throw IoError("cannot open '" + path.string() + "' for writing");
    os << kScoreCsvHeader << '\n';
    for (const TimedScore& s : scores) {
        os << s.timestamp << ',' << format_double(s.score.p_pos) << ','
           << format_double(s.score.p_neg) << ',' << format_double(s.score.p_neu)
           << '\n';
    }
    if (!os) throw IoError("write to '" + path.string() + "' failed");
}

// Reads externally produced per-message scores (e.g. from a transformer
// pipeline run offline). Rows are returned sorted by timestamp; each row
// must already sit on the simplex.
inline std::vector<TimedScore> import_scores(const std::filesystem::path& path) {
    std::ifstream is(path);
    if (!is) throw IoError("cannot open '" + path.string() + "'");
    CsvReader reader(is);
    auto header = reader.next_row();
    if (!header || header->size() != 4 || (*header)[0] != "timestamp" ||
        (*header)[1] != "p_pos" || (*header)[2] != "p_neg" || (*header)[3] != "p_neu")
        throw ValidationError("'" + path.string() + "' header mismatch, expected '" +
                              std::string(kScoreCsvHeader) + "'");
    std::vector<TimedScore> scores;
    while (auto row = reader.next_row()) {
        if (row->size() == 1 && (*row)[0].empty()) continue;
        const std::size_t line = reader.row_line();
        if (row->size() != 4)
            throw ValidationError("line " + std::to_string(line) +
                                  ": expected 4 fields");
        TimedScore s;
        s.timestamp = parse_integer<std::int64_t>((*row)[0], "timestamp", line);
        s.score.p_pos = parse_double((*row)[1], "p_pos", line);
        s.score.p_neg = parse_double((*row)[2], "p_neg", line);
        s.score.p_neu = parse_double((*row)[3], "p_neu", line);
        try {
            validate_score(s.score);
        } catch (const ValidationError& e) {
            throw ValidationError("line " + std::to_string(line) + ": " + e.what());
        }
        scores.push_back(s);
    }
    std::stable_sort(scores.begin(), scores.end(),
                     [](const TimedScore& a, const TimedScore& b) {
                         return a.timestamp < b.timestamp;
                     });
    return scores;
}

// ------------------------------ aggregation ------------------------------

enum class Interval { hour, day };

inline std::int64_t interval_seconds(Interval interval) {
    return interval == Interval::hour ? 3600 : 86400;
}

inline std::string_view to_string(Interval interval) {
    return interval == Interval::hour ? "hour" : "day";
}

inline Interval interval_from_string(std::string_view name) {
    if (name == "hour") return Interval::hour;
    if (name == "day") return Interval::day;
    throw ValidationError("unknown interval '" + std::string(name) +
                          "' (expected hour or day)");
}

struct SentimentBucket {
    std::int64_t chunk_start = 0;   // aligned to the interval
    SentimentScore mean;
    std::size_t count = 0;          // messages averaged, > 0

    bool operator==(const SentimentBucket&) const = default;
};

// Chunked series, buckets in ascending chunk_start order. Chunks with no
// messages are absent rather than zero-filled.
struct SentimentSeries {
    Interval interval = Interval::hour;
    std::vector<SentimentBucket> buckets;

    const SentimentBucket* find(std::int64_t chunk_start) const {
        const auto it = std::lower_bound(
            buckets.begin(), buckets.end(), chunk_start,
            [](const SentimentBucket& b, std::int64_t t) { return b.chunk_start < t; });
        if (it == buckets.end() || it->chunk_start != chunk_start) return nullptr;
        return &*it;
    }

    bool operator==(const SentimentSeries&) const = default;
};

// Component-wise arithmetic mean per chunk. Scores within a chunk are
// summed in a canonical order, so any permutation of the input produces
// bit-identical buckets.
inline SentimentSeries aggregate(std::span<const TimedScore> scores, Interval interval) {
    const std::int64_t width = interval_seconds(interval);
    std::map<std::int64_t, std::vector<SentimentScore>> chunks;
    for (const TimedScore& s : scores) {
        validate_score(s.score);
        chunks[align_down(s.timestamp, width)].push_back(s.score);
    }
    SentimentSeries series;
    series.interval = interval;
    series.buckets.reserve(chunks.size());
    for (auto& [start, members] : chunks) {
        std::sort(members.begin(), members.end(),
                  [](const SentimentScore& a, const SentimentScore& b) {
                      if (a.p_pos != b.p_pos) return a.p_pos < b.p_pos;
                      if (a.p_neg != b.p_neg) return a.p_neg < b.p_neg;
                      return a.p_neu < b.p_neu;
                  });
        SentimentScore sum{0.0, 0.0, 0.0};
        for (const SentimentScore& s : members) {
            sum.p_pos += s.p_pos;
            sum.p_neg += s.p_neg;
            sum.p_neu += s.p_neu;
        }
        const auto n = static_cast<double>(members.size());
        series.buckets.push_back(
            {start, {sum.p_pos / n, sum.p_neg / n, sum.p_neu / n}, members.size()});
    }
    return series;
}

// Scores every message with the given scorer, then aggregates.
inline SentimentSeries aggregate_messages(std::span<const Message> messages,
                                          const Scorer& scorer, Interval interval) {
    std::vector<TimedScore> scores;
    scores.reserve(messages.size());
    for (const Message& m : messages)
        scores.push_back({m.timestamp, score_message(m.text, scorer)});
    return aggregate(scores, interval);
}

// ------------------------------ series files ------------------------------

inline constexpr std::string_view kSeriesCsvHeader =
    "chunk_start,interval,p_pos,p_neg,p_neu,count";

inline void export_series(const SentimentSeries& series,
                          const std::filesystem::path& path) {
    std::ofstream os(path);
    if (!os) throw IoError("cannot open '" + path.string() + "' for writing");
    os << kSeriesCsvHeader << '\n';
    for (const SentimentBucket& b : series.buckets) {
        os << b.chunk_start << ',' << to_string(series.interval) << ','
           << format_double(b.mean.p_pos) << ',' << format_double(b.mean.p_neg) << ','
           << format_double(b.mean.p_neu) << ',' << b.count << '\n';
    }
    if (!os) throw IoError("write to '" + path.string() + "' failed");
}

inline SentimentSeries import_series(const std::filesystem::path& path) {
    std::ifstream is(path);
    if (!is) throw IoError("cannot open '" + path.string() + "'");
    CsvReader reader(is);
    auto header = reader.next_row();
    std::string joined;
    if (header)
        for (std::size_t i = 0; i < header->size(); ++i) {
            if (i > 0) joined.push_back(',');
            joined += (*header)[i];
        }
    if (joined != kSeriesCsvHeader)
        throw ValidationError("'" + path.string() + "' header mismatch, expected '" +
                              std::string(kSeriesCsvHeader) + "'");
    SentimentSeries series;
    bool interval_set = false;
    while (auto row = reader.next_row()) {
        if (row->size() == 1 && (*row)[0].empty()) continue;
        const std::size_t line = reader.row_line();
        if (row->size() != 6)
            throw ValidationError("line " + std::to_string(line) +
                                  ": expected 6 fields");
        SentimentBucket b;
        b.chunk_start = parse_integer<std::int64_t>((*row)[0], "chunk_start", line);
        const Interval interval = interval_from_string((*row)[1]);
        if (!interval_set) {
            series.interval = interval;
            interval_set = true;
        } else if (interval != series.interval) {
            throw ValidationError("line " + std::to_string(line) +
                                  ": mixed intervals in one series");
        }
        b.mean.p_pos = parse_double((*row)[2], "p_pos", line);
        b.mean.p_neg = parse_double((*row)[3], "p_neg", line);
        b.mean.p_neu = parse_double((*row)[4], "p_neu", line);
        b.count = parse_integer<std::size_t>((*row)[5], "count", line);
        try {
            validate_score(b.mean);
        } catch (const ValidationError& e) {
            throw ValidationError("line " + std::to_string(line) + ": " + e.what());
        }
        if (b.count == 0)
            throw ValidationError("line " + std::to_string(line) +
                                  ": bucket count must be positive");
        if (b.chunk_start % interval_seconds(series.interval) != 0)
            throw ValidationError("line " + std::to_string(line) +
                                  ": chunk_start not aligned to interval");
        if (!series.buckets.empty() && b.chunk_start <= series.buckets.back().chunk_start)
            throw ValidationError("line " + std::to_string(line) +
                                  ": chunk_start not strictly increasing");
        series.buckets.push_back(b);
    }
    return series;
}

}  // namespace gasforge
