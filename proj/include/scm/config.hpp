#pragma once

#include <istream>
#include <map>
#include <string>
#include <string_view>

#include "scm/error.hpp"

namespace scm {

/// Flat `key = value` file. Blank lines and lines starting with '#' or ';' are
/// skipped; values may be wrapped in double quotes. Later duplicates are errors.
using KeyValues = std::map<std::string, std::string, std::less<>>;

namespace detail {
inline std::string_view trim(std::string_view s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string_view::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}
} // namespace detail

[[nodiscard]] inline KeyValues parse_key_values(std::istream& in) {
    KeyValues kv;
    std::string line;
    for (std::size_t lineno = 1; std::getline(in, line); ++lineno) {
        auto s = detail::trim(line);
        if (s.empty() || s.front() == '#' || s.front() == ';') continue;
        const auto eq = s.find('=');
        if (eq == std::string_view::npos)
            throw ParseError("config line " + std::to_string(lineno) + ": expected key = value");
        auto key = detail::trim(s.substr(0, eq));
        auto value = detail::trim(s.substr(eq + 1));
        if (key.empty()) throw ParseError("config line " + std::to_string(lineno) + ": empty key");
        if (value.size() >= 2 && value.front() == '"' && value.back() == '"') value = value.substr(1, value.size() - 2);
        if (!kv.emplace(std::string(key), std::string(value)).second)
            throw ParseError("config line " + std::to_string(lineno) + ": duplicate key '" + std::string(key) + "'");
    }
    return kv;
}

} // namespace scm
