#pragma once

#include <charconv>
#include <compare>
#include <cstdio>
#include <optional>
#include <string>
#include <string_view>

#include "scm/error.hpp"

namespace scm {

/// Calendar month. Ordering follows the calendar; arithmetic is in whole months.
struct Period {
    int year = 1970;
    int month = 1;  // 1..12

    constexpr Period() = default;
    constexpr Period(int y, int m) : year(y), month(m) {
        if (m < 1 || m > 12) throw ParameterError("month out of range: " + std::to_string(m));
    }

    /// Months since year 0, used for ordering and distance.
    [[nodiscard]] constexpr long index() const { return static_cast<long>(year) * 12 + (month - 1); }

    [[nodiscard]] static constexpr Period from_index(long idx) {
        long y = idx >= 0 ? idx / 12 : -((-idx + 11) / 12);
        return Period(static_cast<int>(y), static_cast<int>(idx - y * 12) + 1);
    }

    [[nodiscard]] constexpr Period next() const { return plus(1); }
    [[nodiscard]] constexpr Period plus(long months) const { return from_index(index() + months); }

    friend constexpr bool operator==(const Period&, const Period&) = default;
    friend constexpr std::strong_ordering operator<=>(const Period& a, const Period& b) {
        return a.index() <=> b.index();
    }

    /// YYYY-MM
    [[nodiscard]] std::string str() const {
        char buf[32];
        std::snprintf(buf, sizeof buf, "%04d-%02d", year, month);
        return buf;
    }
};

/// Number of months in the inclusive range [from, to]; zero when to < from.
[[nodiscard]] constexpr long months_between(Period from, Period to) {
    return to < from ? 0 : to.index() - from.index() + 1;
}

namespace detail {

inline std::optional<int> parse_digits(std::string_view s) {
    if (s.empty()) return std::nullopt;
    for (char c : s)
        if (c < '0' || c > '9') return std::nullopt;
    int v = 0;
    auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc{} || p != s.data() + s.size()) return std::nullopt;
    return v;
}

inline int days_in_month(int y, int m) {
    static constexpr int days[] = {31, 28, 31, 30, 31, 30, 31, 31, 30, 31, 30, 31};
    bool leap = (y % 4 == 0 && y % 100 != 0) || y % 400 == 0;
    return m == 2 && leap ? 29 : days[m - 1];
}

} // namespace detail

/// Parses YYYY-MM or YYYY-MM-DD. The day, when present, must be a valid calendar
/// day but is otherwise ignored. Returns nullopt on any malformation.
[[nodiscard]] inline std::optional<Period> try_parse_period(std::string_view s) {
    if (s.size() != 7 && s.size() != 10) return std::nullopt;
    if (s[4] != '-') return std::nullopt;
    auto y = detail::parse_digits(s.substr(0, 4));
    auto m = detail::parse_digits(s.substr(5, 2));
    if (!y || !m || *m < 1 || *m > 12) return std::nullopt;
    if (s.size() == 10) {
        if (s[7] != '-') return std::nullopt;
        auto d = detail::parse_digits(s.substr(8, 2));
        if (!d || *d < 1 || *d > detail::days_in_month(*y, *m)) return std::nullopt;
    }
    return Period(*y, *m);
}

[[nodiscard]] inline Period parse_period(std::string_view s) {
    if (auto p = try_parse_period(s)) return *p;
    throw ParseError("invalid period '" + std::string(s) + "' (expected YYYY-MM or YYYY-MM-DD)");
}

} // namespace scm
