#pragma once

#include <charconv>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "gasforge/csv.hpp"
#include "gasforge/errors.hpp"

namespace gasforge {

using Wei = std::uint64_t;
using GasAmount = std::uint64_t;

// One post-London block header, reduced to the fields the pipeline needs.
struct BlockRecord {
    std::int64_t timestamp = 0;     // unix seconds
    std::uint64_t block_number = 0;
    GasAmount gas_limit = 0;        // > 0
    GasAmount gas_used = 0;         // <= gas_limit
    Wei base_fee = 0;               // > 0

    bool operator==(const BlockRecord&) const = default;
};

// Throws ValidationError if the record breaks a field invariant.
inline void validate_record(const BlockRecord& b) {
    if (b.gas_limit == 0)
        throw ValidationError("block " + std::to_string(b.block_number) +
                              ": gas_limit must be positive");
    if (b.gas_used > b.gas_limit)
        throw ValidationError("block " + std::to_string(b.block_number) +
                              ": gas_used " + std::to_string(b.gas_used) +
                              " exceeds gas_limit " + std::to_string(b.gas_limit));
    if (b.base_fee == 0)
        throw ValidationError("block " + std::to_string(b.block_number) +
                              ": base_fee must be positive");
}

// Contiguous run of blocks: consecutive block numbers, non-decreasing
// timestamps. Enforced at import boundaries via validate_chain.
struct BlockSequence {
    std::vector<BlockRecord> records;

    std::size_t size() const { return records.size(); }
    bool empty() const { return records.empty(); }
    const BlockRecord& operator[](std::size_t i) const { return records[i]; }
    auto begin() const { return records.begin(); }
    auto end() const { return records.end(); }

    bool operator==(const BlockSequence&) const = default;
};

// ------------------------------ validation ------------------------------

struct ChainFinding {
    enum class Kind { record, gap, ordering };

    Kind kind{};
    std::size_t index = 0;          // position in the sequence
    std::uint64_t block_number = 0;
    std::string detail;
};

struct ValidationReport {
    std::vector<ChainFinding> findings;

    bool ok() const { return findings.empty(); }
};

// Collects every violation instead of stopping at the first one.
inline ValidationReport validate_chain(const BlockSequence& seq) {
    ValidationReport report;
    for (std::size_t i = 0; i < seq.size(); ++i) {
        const BlockRecord& b = seq[i];
        try {
            validate_record(b);
        } catch (const ValidationError& e) {
            report.findings.push_back(
                {ChainFinding::Kind::record, i, b.block_number, e.what()});
        }
        if (i == 0) continue;
        const BlockRecord& prev = seq[i - 1];
        if (b.block_number != prev.block_number + 1)
            report.findings.push_back(
                {ChainFinding::Kind::gap, i, b.block_number,
                 "expected block " + std::to_string(prev.block_number + 1) +
                     ", found " + std::to_string(b.block_number)});
        if (b.timestamp < prev.timestamp)
            report.findings.push_back(
                {ChainFinding::Kind::ordering, i, b.block_number,
                 "timestamp " + std::to_string(b.timestamp) + " precedes " +
                     std::to_string(prev.timestamp)});
    }
    return report;
}

inline void require_valid_chain(const BlockSequence& seq) {
    const ValidationReport report = validate_chain(seq);
    if (!report.ok()) {
        const ChainFinding& f = report.findings.front();
        throw ValidationError("invalid chain (" +
                              std::to_string(report.findings.size()) +
                              " finding(s)); first: " + f.detail);
    }
}

// ------------------------------ hex quantities ------------------------------

// Decodes an Ethereum JSON-RPC quantity: "0x" prefix, lowercase or
// uppercase hex digits, value must fit in 64 bits.
inline std::uint64_t decode_quantity(std::string_view text) {
    if (text.size() < 3 || text[0] != '0' || (text[1] != 'x' && text[1] != 'X'))
        throw DecodeError("quantity '" + std::string(text) +
                          "' missing 0x prefix or digits");
    std::uint64_t value = 0;
    const auto* first = text.data() + 2;
    const auto* last = text.data() + text.size();
    const auto [ptr, ec] = std::from_chars(first, last, value, 16);
    if (ec == std::errc::result_out_of_range)
        throw DecodeError("quantity '" + std::string(text) + "' exceeds 64 bits");
    if (ec != std::errc{} || ptr != last)
        throw DecodeError("quantity '" + std::string(text) + "' is not valid hex");
    return value;
}

// ------------------------------ file formats ------------------------------

enum class BlockFileFormat { csv, jsonl };

inline BlockFileFormat block_format_from_path(const std::filesystem::path& path) {
    const std::string ext = path.extension().string();
    if (ext == ".csv") return BlockFileFormat::csv;
    if (ext == ".jsonl") return BlockFileFormat::jsonl;
    throw ValidationError("cannot infer block file format from '" + path.string() +
                          "' (expected .csv or .jsonl)");
}

inline constexpr std::string_view kBlockCsvHeader =
    "timestamp,block_number,gas_limit,gas_used,base_fee";

inline void export_blocks(const BlockSequence& seq, const std::filesystem::path& path,
                          BlockFileFormat format) {
    std::ofstream os(path);
    if (!os) throw IoError("cannot open '" + path.string() + "' for writing");
    if (format == BlockFileFormat::csv) {
        os << kBlockCsvHeader << '\n';
        for (const BlockRecord& b : seq) {
            os << b.timestamp << ',' << b.block_number << ',' << b.gas_limit << ','
               << b.gas_used << ',' << b.base_fee << '\n';
        }
    } else {
        for (const BlockRecord& b : seq) {
            nlohmann::json j{{"timestamp", b.timestamp},
                             {"block_number", b.block_number},
                             {"gas_limit", b.gas_limit},
                             {"gas_used", b.gas_used},
                             {"base_fee", b.base_fee}};
            os << j.dump() << '\n';
        }
    }
    if (!os) throw IoError("write to '" + path.string() + "' failed");
}

namespace detail {

inline BlockSequence import_blocks_csv(const std::filesystem::path& path) {
    std::ifstream is(path);
    if (!is) throw IoError("cannot open '" + path.string() + "'");
    CsvReader reader(is);
    auto header = reader.next_row();
    if (!header)
        throw ValidationError("'" + path.string() + "' is empty, expected header row");
    std::string joined;
    for (std::size_t i = 0; i < header->size(); ++i) {
        if (i > 0) joined.push_back(',');
        joined += (*header)[i];
    }
    if (joined != kBlockCsvHeader)
        throw ValidationError("'" + path.string() + "' header mismatch: got '" +
                              joined + "'");
    BlockSequence seq;
    while (auto row = reader.next_row()) {
        if (row->size() == 1 && (*row)[0].empty()) continue;  // trailing newline
        const std::size_t line = reader.row_line();
        if (row->size() != 5)
            throw ValidationError("line " + std::to_string(line) + ": expected 5 fields, got " +
                                  std::to_string(row->size()));
        BlockRecord b;
        b.timestamp = parse_integer<std::int64_t>((*row)[0], "timestamp", line);
        b.block_number = parse_integer<std::uint64_t>((*row)[1], "block_number", line);
        b.gas_limit = parse_integer<std::uint64_t>((*row)[2], "gas_limit", line);
        b.gas_used = parse_integer<std::uint64_t>((*row)[3], "gas_used", line);
        b.base_fee = parse_integer<std::uint64_t>((*row)[4], "base_fee", line);
        seq.records.push_back(b);
    }
    return seq;
}

inline BlockSequence import_blocks_jsonl(const std::filesystem::path& path) {
    std::ifstream is(path);
    if (!is) throw IoError("cannot open '" + path.string() + "'");
    BlockSequence seq;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(is, line)) {
        ++lineno;
        if (line.empty()) continue;
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(line);
        } catch (const nlohmann::json::exception& e) {
            throw DecodeError("line " + std::to_string(lineno) + ": " + e.what());
        }
        if (!j.is_object())
            throw DecodeError("line " + std::to_string(lineno) + ": expected object");
        BlockRecord b;
        try {
            b.timestamp = j.at("timestamp").get<std::int64_t>();
            b.block_number = j.at("block_number").get<std::uint64_t>();
            b.gas_limit = j.at("gas_limit").get<std::uint64_t>();
            b.gas_used = j.at("gas_used").get<std::uint64_t>();
            b.base_fee = j.at("base_fee").get<std::uint64_t>();
        } catch (const nlohmann::json::exception& e) {
            throw DecodeError("line " + std::to_string(lineno) + ": " + e.what());
        }
        seq.records.push_back(b);
    }
    return seq;
}

}  // namespace detail

// Reads a block file, then enforces record and sequence invariants; a
// violation anywhere rejects the whole file.
inline BlockSequence import_blocks(const std::filesystem::path& path,
                                   BlockFileFormat format) {
    BlockSequence seq = format == BlockFileFormat::csv
                            ? detail::import_blocks_csv(path)
                            : detail::import_blocks_jsonl(path);
    require_valid_chain(seq);
    return seq;
}

inline BlockSequence import_blocks(const std::filesystem::path& path) {
    return import_blocks(path, block_format_from_path(path));
}

}  // namespace gasforge
