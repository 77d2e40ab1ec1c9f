#pragma once

#include <cstdint>
#include <string>
#include <string_view>

#include "gasforge/errors.hpp"

namespace gasforge {

// UTC wall-clock helpers. All timestamps are unix seconds; chunk boundaries
// are aligned to the epoch, so daily chunks start at 00:00:00 UTC.

// Days since 1970-01-01 for a proleptic Gregorian civil date.
constexpr std::int64_t days_from_civil(std::int64_t y, unsigned m, unsigned d) {
    y -= m <= 2;
    const std::int64_t era = (y >= 0 ? y : y - 399) / 400;
    const unsigned yoe = static_cast<unsigned>(y - era * 400);
    const unsigned doy = (153 * (m + (m > 2 ? -3 : 9)) + 2) / 5 + d - 1;
    const unsigned doe = yoe * 365 + yoe / 4 - yoe / 100 + doy;
    return era * 146097 + static_cast<std::int64_t>(doe) - 719468;
}

namespace detail {

inline unsigned parse_digits(std::string_view s, std::size_t pos, std::size_t count,
                             std::string_view what) {
    if (pos + count > s.size())
        throw DecodeError("truncated timestamp '" + std::string(s) + "'");
    unsigned value = 0;
    for (std::size_t i = 0; i < count; ++i) {
        const char c = s[pos + i];
        if (c < '0' || c > '9')
            throw DecodeError("bad " + std::string(what) + " in timestamp '" +
                              std::string(s) + "'");
        value = value * 10 + static_cast<unsigned>(c - '0');
    }
    return value;
}

inline void expect_char(std::string_view s, std::size_t pos, char c) {
    if (pos >= s.size() || s[pos] != c)
        throw DecodeError("malformed timestamp '" + std::string(s) + "'");
}

}  // namespace detail

// Parses ISO 8601 combined date-time: YYYY-MM-DDTHH:MM[:SS[.frac]] with a
// trailing 'Z' or a +hh:mm / -hh:mm offset. Fractional seconds are
// truncated. Returns unix seconds.
inline std::int64_t parse_iso8601(std::string_view s) {
    const unsigned year = detail::parse_digits(s, 0, 4, "year");
    detail::expect_char(s, 4, '-');
    const unsigned month = detail::parse_digits(s, 5, 2, "month");
    detail::expect_char(s, 7, '-');
    const unsigned day = detail::parse_digits(s, 8, 2, "day");
    if (s.size() <= 10 || (s[10] != 'T' && s[10] != ' '))
        throw DecodeError("malformed timestamp '" + std::string(s) + "'");
    const unsigned hour = detail::parse_digits(s, 11, 2, "hour");
    detail::expect_char(s, 13, ':');
    const unsigned minute = detail::parse_digits(s, 14, 2, "minute");
    std::size_t pos = 16;
    unsigned second = 0;
    if (pos < s.size() && s[pos] == ':') {
        second = detail::parse_digits(s, pos + 1, 2, "second");
        pos += 3;
    }
    if (pos < s.size() && s[pos] == '.') {
        ++pos;
        while (pos < s.size() && s[pos] >= '0' && s[pos] <= '9') ++pos;
    }
    if (month < 1 || month > 12 || day < 1 || day > 31 || hour > 23 ||
        minute > 59 || second > 60)
        throw DecodeError("timestamp field out of range '" + std::string(s) + "'");

    std::int64_t offset = 0;
    if (pos >= s.size())
        throw DecodeError("timestamp missing zone designator '" + std::string(s) + "'");
    if (s[pos] == 'Z') {
        ++pos;
    } else if (s[pos] == '+' || s[pos] == '-') {
        const bool negative = s[pos] == '-';
        const unsigned oh = detail::parse_digits(s, pos + 1, 2, "offset hour");
        detail::expect_char(s, pos + 3, ':');
        const unsigned om = detail::parse_digits(s, pos + 4, 2, "offset minute");
        offset = static_cast<std::int64_t>(oh) * 3600 + om * 60;
        if (negative) offset = -offset;
        pos += 6;
    } else {
        throw DecodeError("timestamp missing zone designator '" + std::string(s) + "'");
    }
    if (pos != s.size())
        throw DecodeError("trailing characters in timestamp '" + std::string(s) + "'");

    const std::int64_t days = days_from_civil(year, month, day);
    return days * 86400 + hour * 3600 + minute * 60 + second - offset;
}

// Start of the chunk containing ts (floor division, exact for negatives).
inline std::int64_t align_down(std::int64_t ts, std::int64_t interval) {
    std::int64_t q = ts / interval;
    if (ts % interval != 0 && ts < 0) --q;
    return q * interval;
}

// Start of the most recent chunk that is fully completed at time ts: the
// chunk ending at or before ts, never the one ts falls inside.
inline std::int64_t preceding_chunk_start(std::int64_t ts, std::int64_t interval) {
    return align_down(ts - interval, interval);
}

}  // namespace gasforge
