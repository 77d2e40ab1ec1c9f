#pragma once

#include <charconv>
#include <cstdint>
#include <cstdio>
#include <istream>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "gasforge/errors.hpp"

namespace gasforge {

// Minimal RFC 4180 CSV support: fields containing commas, quotes, or line
// breaks are quoted on output; quoted fields (including embedded newlines)
// are handled on input. All files use '\n' line endings on output and
// accept "\r\n" on input.

inline std::string csv_escape(std::string_view field) {
    if (field.find_first_of(",\"\r\n") == std::string_view::npos)
        return std::string(field);
    std::string out;
    out.reserve(field.size() + 2);
    out.push_back('"');
    for (char c : field) {
        if (c == '"') out.push_back('"');
        out.push_back(c);
    }
    out.push_back('"');
    return out;
}

inline void write_csv_row(std::ostream& os, std::span<const std::string> fields) {
    for (std::size_t i = 0; i < fields.size(); ++i) {
        if (i > 0) os.put(',');
        os << csv_escape(fields[i]);
    }
    os.put('\n');
}

// Pull-style reader; next_row() returns std::nullopt at end of input.
class CsvReader {
  public:
    explicit CsvReader(std::istream& is) : is_(is) {}

    // 1-based line number where the most recent row started.
    std::size_t row_line() const { return row_line_; }

    std::optional<std::vector<std::string>> next_row() {
        if (is_.peek() == std::char_traits<char>::eof()) return std::nullopt;
        row_line_ = line_;
        std::vector<std::string> fields;
        std::string field;
        bool quoted = false;
        int c;
        while ((c = is_.get()) != std::char_traits<char>::eof()) {
            if (quoted) {
                if (c == '"') {
                    if (is_.peek() == '"') {
                        is_.get();
                        field.push_back('"');
                    } else {
                        quoted = false;
                    }
                } else {
                    if (c == '\n') ++line_;
                    field.push_back(static_cast<char>(c));
                }
                continue;
            }
            if (c == '"' && field.empty()) {
                quoted = true;
            } else if (c == ',') {
                fields.push_back(std::move(field));
                field.clear();
            } else if (c == '\n') {
                ++line_;
                break;
            } else if (c == '\r' && is_.peek() == '\n') {
                is_.get();
                ++line_;
                break;
            } else {
                field.push_back(static_cast<char>(c));
            }
        }
        if (quoted)
            throw DecodeError("unterminated quoted CSV field at line " +
                              std::to_string(row_line_));
        fields.push_back(std::move(field));
        return fields;
    }

  private:
    std::istream& is_;
    std::size_t line_ = 1;
    std::size_t row_line_ = 1;
};

// ------------------------------ field parsing ------------------------------

template <typename Int>
Int parse_integer(std::string_view text, std::string_view what, std::size_t line) {
    Int value{};
    const auto* first = text.data();
    const auto* last = text.data() + text.size();
    const auto [ptr, ec] = std::from_chars(first, last, value);
    if (ec != std::errc{} || ptr != last)
        throw DecodeError("bad " + std::string(what) + " '" + std::string(text) +
                          "' at line " + std::to_string(line));
    return value;
}

inline double parse_double(std::string_view text, std::string_view what,
                           std::size_t line) {
    double value{};
    const auto* first = text.data();
    const auto* last = text.data() + text.size();
    const auto [ptr, ec] = std::from_chars(first, last, value);
    if (ec != std::errc{} || ptr != last)
        throw DecodeError("bad " + std::string(what) + " '" + std::string(text) +
                          "' at line " + std::to_string(line));
    return value;
}

// Exact decimal rendering; round-trips through parse_double bit-for-bit.
inline std::string format_double(double value) {
    char buf[32];
    const int n = std::snprintf(buf, sizeof buf, "%.17g", value);
    return std::string(buf, static_cast<std::size_t>(n));
}

}  // namespace gasforge
