#include "gasforge/features.hpp"

#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <random>

#include "gasforge/util.hpp"

namespace gasforge {
namespace {

namespace fs = std::filesystem;

fs::path temp_file(const std::string& name) {
    const fs::path dir = fs::temp_directory_path() / "gasforge_features_test";
    fs::create_directories(dir);
    return dir / name;
}

BlockSequence random_chain(std::mt19937_64& rng, std::size_t n,
                           std::int64_t start_ts = 1'679'356'800) {
    BlockSequence seq;
    std::int64_t ts = start_ts;
    for (std::size_t i = 0; i < n; ++i) {
        BlockRecord b;
        b.timestamp = ts;
        b.block_number = 1000 + i;
        b.gas_limit = 20'000'000 + bounded_rand(rng, 20'000'000);
        b.gas_used = bounded_rand(rng, b.gas_limit + 1);
        b.base_fee = 1 + bounded_rand(rng, 3'000'000'000);
        seq.records.push_back(b);
        ts += 10 + static_cast<std::int64_t>(bounded_rand(rng, 5));
    }
    return seq;
}

TEST(Features, AlphaAndBetaReadTheBlock) {
    BlockRecord b{1679356800, 1, 30'000'000, 7'500'000, 42};
    EXPECT_EQ(alpha(b), 0.25);
    EXPECT_EQ(beta(b), 42u);
    b.gas_used = b.gas_limit + 1;
    EXPECT_THROW(alpha(b), ValidationError);
}

// Brute-force cross-check: every window recomputed with plain arithmetic,
// no shared helpers beyond the block fields themselves.
TEST(BuildWindows, MatchesBruteForceEnumeration) {
    std::mt19937_64 rng(47);
    for (std::size_t k : {std::size_t{1}, std::size_t{2}, std::size_t{3},
                          std::size_t{5}}) {
        const BlockSequence seq = random_chain(rng, 40);
        const AlignedDataset dataset = build_windows(seq, k);
        EXPECT_EQ(dataset.k, k);
        ASSERT_EQ(dataset.windows.size(), seq.size() - k);
        for (std::size_t i = 0; i + k < seq.size(); ++i) {
            const FeatureWindow& w = dataset.windows[i];
            ASSERT_EQ(w.alphas.size(), k);
            ASSERT_EQ(w.betas.size(), k);
            for (std::size_t j = 0; j < k; ++j) {
                const BlockRecord& b = seq[i + j];
                EXPECT_EQ(w.alphas[j], static_cast<double>(b.gas_used) /
                                           static_cast<double>(b.gas_limit));
                EXPECT_EQ(w.betas[j], b.base_fee);
            }
            const BlockRecord& t = seq[i + k];
            const double target = static_cast<double>(t.gas_limit / 2);
            EXPECT_EQ(w.target_y, (static_cast<double>(t.gas_used) - target) / target);
            EXPECT_EQ(w.anchor_timestamp, seq[i + k - 1].timestamp);
            EXPECT_FALSE(w.gamma_hour.has_value());
            EXPECT_FALSE(w.gamma_day.has_value());
        }
    }
}

TEST(BuildWindows, TargetUsesTheTargetBlocksOwnLimit) {
    BlockSequence seq;
    seq.records.push_back({100, 1, 30'000'000, 15'000'000, 10});
    seq.records.push_back({112, 2, 40'000'000, 30'000'000, 10});  // limit changed
    const AlignedDataset dataset = build_windows(seq, 1);
    ASSERT_EQ(dataset.windows.size(), 1u);
    EXPECT_EQ(dataset.windows[0].target_y, 0.5);  // (30M - 20M) / 20M
}

// Changing any block after a window's target block must leave that window
// untouched: features never reach past the prediction point.
TEST(BuildWindows, WindowsAreInsensitiveToTheFuture) {
    std::mt19937_64 rng(53);
    const std::size_t k = 3;
    const BlockSequence base = random_chain(rng, 30);
    const AlignedDataset reference = build_windows(base, k);
    for (std::size_t j = 0; j < base.size(); ++j) {
        BlockSequence mutated = base;
        mutated.records[j].gas_used = mutated.records[j].gas_used / 2 + 1;
        const AlignedDataset changed = build_windows(mutated, k);
        ASSERT_EQ(changed.windows.size(), reference.windows.size());
        for (std::size_t i = 0; i + k < base.size(); ++i) {
            if (i + k < j) {
                EXPECT_EQ(changed.windows[i], reference.windows[i])
                    << "window " << i << " saw a change at future block " << j;
            } else if (i + k == j) {
                EXPECT_EQ(changed.windows[i].alphas, reference.windows[i].alphas);
                EXPECT_NE(changed.windows[i].target_y, reference.windows[i].target_y);
            }
        }
    }
}

TEST(BuildWindows, RejectsBadInputs) {
    std::mt19937_64 rng(57);
    const BlockSequence seq = random_chain(rng, 5);
    EXPECT_THROW(build_windows(seq, 0), ValidationError);
    EXPECT_THROW(build_windows(seq, 5), ValidationError);  // needs k + 1 blocks
    EXPECT_NO_THROW(build_windows(seq, 4));
    BlockSequence gapped = seq;
    gapped.records[2].block_number += 5;
    EXPECT_THROW(build_windows(gapped, 2), ValidationError);
}

TEST(BuildWindows, TargetOutsideDomainNamesTheBlock) {
    BlockSequence seq;
    seq.records.push_back({100, 1, 30'000'000, 15'000'000, 10});
    seq.records.push_back({112, 2, 30'000'000, 30'000'000, 10});
    MechanismParams params;
    params.target_fraction = {1, 4};  // target 7.5M, full block exceeds twice that
    try {
        build_windows(seq, 1, params);
        FAIL() << "expected DomainError";
    } catch (const DomainError& e) {
        EXPECT_NE(std::string(e.what()).find("2"), std::string::npos);
    }
}

TEST(Ema, MatchesTheRecurrence) {
    const std::vector<double> x = {1.0, 2.0, 0.0, 4.0};
    const std::vector<double> s = ema(x, 0.5);
    ASSERT_EQ(s.size(), 4u);
    EXPECT_EQ(s[0], 1.0);
    EXPECT_EQ(s[1], 1.5);    // 0.5 * (2 - 1) + 1
    EXPECT_EQ(s[2], 0.75);   // 0.5 * (0 - 1.5) + 1.5
    EXPECT_EQ(s[3], 2.375);  // 0.5 * (4 - 0.75) + 0.75
}

TEST(Ema, UnitConstantIsIdentity) {
    const std::vector<double> x = {3.0, 1.0, 4.0, 1.0, 5.0};
    EXPECT_EQ(ema(x, 1.0), x);
    EXPECT_EQ(ema(std::vector<double>(10, 2.5), 0.3), std::vector<double>(10, 2.5));
}

TEST(Ema, RejectsBadInputs) {
    const std::vector<double> x = {1.0};
    EXPECT_THROW(ema(x, 0.0), ValidationError);
    EXPECT_THROW(ema(x, 1.5), ValidationError);
    EXPECT_THROW(ema(std::vector<double>{}, 0.5), ValidationError);
}

// ------------------------------ alignment ------------------------------

SentimentSeries hourly_series(std::initializer_list<std::int64_t> starts) {
    SentimentSeries series;
    series.interval = Interval::hour;
    double v = 0.1;
    for (std::int64_t s : starts) {
        series.buckets.push_back({s, {v, 0.05, 1.0 - v - 0.05}, 1});
        v += 0.1;
    }
    return series;
}

TEST(AlignSentiment, AttachesThePrecedingCompletedChunk) {
    // Anchors at 10:34:56 and 11:00:00 on 2023-03-21.
    AlignedDataset input;
    input.k = 1;
    input.windows.push_back({{0.5}, {10}, {}, {}, 0.0, 1679394896});
    input.windows.push_back({{0.6}, {11}, {}, {}, 0.1, 1679356800 + 11 * 3600});
    const std::int64_t nine = 1679356800 + 9 * 3600;
    const std::int64_t ten = 1679356800 + 10 * 3600;
    const SentimentSeries hourly = hourly_series({nine, ten});
    DatasetConfig flags;
    flags.use_hour_sentiment = true;
    const AlignmentResult result = align_sentiment(input, &hourly, nullptr, flags);
    EXPECT_EQ(result.dropped_windows, 0u);
    ASSERT_EQ(result.dataset.windows.size(), 2u);
    // 10:34:56 reads the 09:00 chunk; 11:00:00 sharp reads the completed 10:00.
    EXPECT_EQ(result.dataset.windows[0].gamma_hour, hourly.buckets[0].mean);
    EXPECT_EQ(result.dataset.windows[1].gamma_hour, hourly.buckets[1].mean);
    EXPECT_FALSE(result.dataset.windows[0].gamma_day.has_value());
    EXPECT_TRUE(result.dataset.config.use_hour_sentiment);
}

TEST(AlignSentiment, DropsWindowsWithMissingChunks) {
    AlignedDataset input;
    input.k = 1;
    input.windows.push_back({{0.5}, {10}, {}, {}, 0.0, 4000});   // needs chunk 0
    input.windows.push_back({{0.6}, {11}, {}, {}, 0.0, 8000});   // needs chunk 3600
    input.windows.push_back({{0.7}, {12}, {}, {}, 0.0, 11000});  // needs chunk 7200
    SentimentSeries hourly;
    hourly.interval = Interval::hour;
    hourly.buckets.push_back({0, {0.2, 0.2, 0.6}, 4});
    hourly.buckets.push_back({7200, {0.3, 0.3, 0.4}, 2});
    DatasetConfig flags;
    flags.use_hour_sentiment = true;
    const AlignmentResult result = align_sentiment(input, &hourly, nullptr, flags);
    EXPECT_EQ(result.dropped_windows, 1u);
    ASSERT_EQ(result.dataset.windows.size(), 2u);
    EXPECT_EQ(result.dataset.windows[0].anchor_timestamp, 4000);
    EXPECT_EQ(result.dataset.windows[1].anchor_timestamp, 11000);
}

TEST(AlignSentiment, BothIntervalsMustResolve) {
    AlignedDataset input;
    input.k = 1;
    input.windows.push_back({{0.5}, {10}, {}, {}, 0.0, 90000});  // day 2 of epoch
    SentimentSeries hourly;
    hourly.interval = Interval::hour;
    hourly.buckets.push_back({86400, {0.2, 0.2, 0.6}, 1});  // hour completed at 90000
    SentimentSeries daily;
    daily.interval = Interval::day;
    daily.buckets.push_back({0, {0.1, 0.1, 0.8}, 3});
    DatasetConfig flags;
    flags.use_hour_sentiment = true;
    flags.use_day_sentiment = true;
    const AlignmentResult both = align_sentiment(input, &hourly, &daily, flags);
    ASSERT_EQ(both.dataset.windows.size(), 1u);
    EXPECT_EQ(both.dataset.windows[0].gamma_day, daily.buckets[0].mean);
    // Remove the daily bucket the window needs: hourly resolves, daily not.
    daily.buckets[0].chunk_start = 86400 * 10;
    const AlignmentResult dropped = align_sentiment(input, &hourly, &daily, flags);
    EXPECT_EQ(dropped.dataset.windows.size(), 0u);
    EXPECT_EQ(dropped.dropped_windows, 1u);
}

TEST(AlignSentiment, NoFlagsMeansPassThrough) {
    AlignedDataset input;
    input.k = 1;
    input.windows.push_back({{0.5}, {10}, {}, {}, 0.25, 4000});
    const AlignmentResult result = align_sentiment(input, nullptr, nullptr, {});
    EXPECT_EQ(result.dropped_windows, 0u);
    ASSERT_EQ(result.dataset.windows.size(), 1u);
    EXPECT_FALSE(result.dataset.windows[0].gamma_hour.has_value());
    EXPECT_EQ(result.dataset.windows[0].target_y, 0.25);
}

TEST(AlignSentiment, ValidatesSeriesAgainstFlags) {
    AlignedDataset input;
    input.k = 1;
    input.windows.push_back({{0.5}, {10}, {}, {}, 0.0, 4000});
    DatasetConfig flags;
    flags.use_hour_sentiment = true;
    EXPECT_THROW(align_sentiment(input, nullptr, nullptr, flags), ValidationError);
    SentimentSeries empty;
    empty.interval = Interval::hour;
    EXPECT_THROW(align_sentiment(input, &empty, nullptr, flags), ValidationError);
    SentimentSeries wrong;
    wrong.interval = Interval::day;
    wrong.buckets.push_back({0, {0.1, 0.1, 0.8}, 1});
    EXPECT_THROW(align_sentiment(input, &wrong, nullptr, flags), ValidationError);
}

// ------------------------------ splitting ------------------------------

AlignedDataset toy_dataset(std::size_t n) {
    AlignedDataset d;
    d.k = 1;
    for (std::size_t i = 0; i < n; ++i)
        d.windows.push_back({{0.5}, {i + 1}, {}, {}, 0.0,
                             static_cast<std::int64_t>(i)});
    return d;
}

TEST(ChronologicalSplit, FloorsTheTrainCount) {
    const AlignedDataset d = toy_dataset(10);
    const auto [train, test] = chronological_split(d, 0.75);
    EXPECT_EQ(train.windows.size(), 7u);
    EXPECT_EQ(test.windows.size(), 3u);
    EXPECT_EQ(train.windows[6], d.windows[6]);
    EXPECT_EQ(test.windows[0], d.windows[7]);
    EXPECT_EQ(train.k, d.k);
    EXPECT_EQ(test.config, d.config);
}

TEST(ChronologicalSplit, KeepsTimeOrder) {
    const AlignedDataset d = toy_dataset(25);
    const auto [train, test] = chronological_split(d, 0.5);
    EXPECT_EQ(train.windows.size(), 12u);
    for (const FeatureWindow& w : test.windows)
        EXPECT_GT(w.anchor_timestamp, train.windows.back().anchor_timestamp);
}

TEST(ChronologicalSplit, RejectsDegenerateSplits) {
    const AlignedDataset d = toy_dataset(3);
    EXPECT_THROW(chronological_split(d, 0.0), ValidationError);
    EXPECT_THROW(chronological_split(d, 1.0), ValidationError);
    EXPECT_THROW(chronological_split(toy_dataset(1), 0.5), ValidationError);
    EXPECT_THROW(chronological_split(d,  0.1), ValidationError);  // train empty
}

// ------------------------------ files ------------------------------

AlignedDataset sentiment_dataset(std::mt19937_64& rng, std::size_t n,
                                 DatasetConfig config, std::size_t k = 2) {
    AlignedDataset d;
    d.k = k;
    d.config = config;
    for (std::size_t i = 0; i < n; ++i) {
        FeatureWindow w;
        for (std::size_t j = 0; j < k; ++j) {
            w.alphas.push_back(uniform01(rng));
            w.betas.push_back(1 + bounded_rand(rng, 1'000'000'000));
        }
        const auto simplex = [&rng]() -> SentimentScore {
            double p = uniform01(rng), q = uniform01(rng) * (1.0 - p);
            return {p, q, 1.0 - p - q};
        };
        if (config.use_hour_sentiment) w.gamma_hour = simplex();
        if (config.use_day_sentiment) w.gamma_day = simplex();
        w.target_y = uniform_pm(rng, 1.0);
        w.anchor_timestamp = 0;  // not part of the file format
        d.windows.push_back(std::move(w));
    }
    return d;
}

TEST(DatasetFiles, RoundTripAllFlagCombinations) {
    std::mt19937_64 rng(61);
    for (bool hour : {false, true}) {
        for (bool day : {false, true}) {
            DatasetConfig config;
            config.use_hour_sentiment = hour;
            config.use_day_sentiment = day;
            const AlignedDataset d = sentiment_dataset(rng, 30, config);
            const fs::path path = temp_file("roundtrip.csv");
            export_dataset(d, path);
            EXPECT_EQ(import_dataset(path), d);
        }
    }
}

TEST(DatasetFiles, HeaderDescribesTheLayout) {
    std::mt19937_64 rng(67);
    DatasetConfig config;
    config.use_day_sentiment = true;
    const AlignedDataset d = sentiment_dataset(rng, 2, config, 3);
    const fs::path path = temp_file("header.csv");
    export_dataset(d, path);
    std::ifstream is(path);
    std::string line;
    std::getline(is, line);
    EXPECT_EQ(line,
              "alpha_1,alpha_2,alpha_3,beta_1,beta_2,beta_3,"
              "gd_pos,gd_neg,gd_neu,target_y");
}

TEST(DatasetFiles, SidecarRecordsTheShape) {
    std::mt19937_64 rng(71);
    const AlignedDataset d = sentiment_dataset(rng, 5, {}, 2);
    const fs::path path = temp_file("sidecar.csv");
    export_dataset(d, path);
    std::ifstream ms(path.string() + ".meta.json");
    const auto meta = nlohmann::json::parse(ms);
    EXPECT_EQ(meta["k"], 2);
    EXPECT_EQ(meta["rows"], 5);
    EXPECT_EQ(meta["use_hour_sentiment"], false);
}

TEST(DatasetFiles, SidecarDisagreementIsAnError) {
    std::mt19937_64 rng(73);
    const AlignedDataset d = sentiment_dataset(rng, 5, {}, 2);
    const fs::path path = temp_file("disagree.csv");
    export_dataset(d, path);
    std::ofstream(path.string() + ".meta.json")
        << R"({"k": 3, "use_hour_sentiment": false, "use_day_sentiment": false})";
    EXPECT_THROW(import_dataset(path), ValidationError);
}

TEST(DatasetFiles, ImportValidatesValues) {
    const auto write = [&](const std::string& name, const std::string& content) {
        const fs::path path = temp_file(name);
        std::ofstream(path) << content;
        return path;
    };
    EXPECT_THROW(
        import_dataset(write("badalpha.csv",
                             "alpha_1,beta_1,target_y\n1.5,10,0.0\n")),
        ValidationError);
    EXPECT_THROW(
        import_dataset(write("badtarget.csv",
                             "alpha_1,beta_1,target_y\n0.5,10,2.0\n")),
        ValidationError);
    EXPECT_THROW(
        import_dataset(write("badcount.csv",
                             "alpha_1,beta_1,target_y\n0.5,10\n")),
        ValidationError);
    EXPECT_THROW(
        import_dataset(write("noalpha.csv", "beta_1,target_y\n10,0.0\n")),
        ValidationError);
    EXPECT_THROW(
        import_dataset(write("nobeta.csv", "alpha_1,target_y\n0.5,0.0\n")),
        ValidationError);
    EXPECT_THROW(
        import_dataset(write("notarget.csv", "alpha_1,beta_1\n0.5,10\n")),
        ValidationError);
    EXPECT_THROW(
        import_dataset(write("offsimplex.csv",
                             "alpha_1,beta_1,gh_pos,gh_neg,gh_neu,target_y\n"
                             "0.5,10,0.9,0.9,0.9,0.0\n")),
        ValidationError);
    EXPECT_THROW(import_dataset(temp_file("absent.csv")), IoError);
}

TEST(DatasetFiles, EndToEndFromChain) {
    std::mt19937_64 rng(79);
    const BlockSequence seq = random_chain(rng, 50);
    AlignedDataset d = build_windows(seq, 3);
    const fs::path path = temp_file("fromchain.csv");
    export_dataset(d, path);
    const AlignedDataset back = import_dataset(path);
    ASSERT_EQ(back.windows.size(), d.windows.size());
    for (std::size_t i = 0; i < d.windows.size(); ++i) {
        EXPECT_EQ(back.windows[i].alphas, d.windows[i].alphas);
        EXPECT_EQ(back.windows[i].betas, d.windows[i].betas);
        EXPECT_EQ(back.windows[i].target_y, d.windows[i].target_y);
        EXPECT_EQ(back.windows[i].anchor_timestamp, 0);
    }
}

}  // namespace
}  // namespace gasforge
