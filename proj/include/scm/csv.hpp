#pragma once

// Minimal RFC-4180 reader/writer plus the number formatting shared by every
// emitted file. Output must be byte-stable across runs, so doubles are written
// with the shortest representation that round-trips.

#include <charconv>
#include <cmath>
#include <istream>
#include <iterator>
#include <ostream>
#include <string>
#include <string_view>
#include <vector>

#include "scm/error.hpp"

namespace scm::csv {

using Row = std::vector<std::string>;

struct Table {
    Row header;
    std::vector<Row> rows;
};

/// Splits CSV text into records. Quoted fields may contain commas, doubled
/// quotes and line breaks. A leading UTF-8 BOM is dropped. Blank trailing lines
/// are ignored.
[[nodiscard]] inline std::vector<Row> parse_records(std::string_view text) {
    if (text.size() >= 3 && text.substr(0, 3) == "\xEF\xBB\xBF") text.remove_prefix(3);

    std::vector<Row> out;
    Row row;
    std::string field;
    bool in_quotes = false;
    bool field_was_quoted = false;
    std::size_t record = 1;

    auto end_field = [&] {
        row.push_back(std::move(field));
        field.clear();
        field_was_quoted = false;
    };
    auto end_record = [&] {
        end_field();
        if (!(row.size() == 1 && row[0].empty())) out.push_back(std::move(row));
        row.clear();
        ++record;
    };

    for (std::size_t i = 0; i < text.size(); ++i) {
        char c = text[i];
        if (in_quotes) {
            if (c == '"') {
                if (i + 1 < text.size() && text[i + 1] == '"') {
                    field.push_back('"');
                    ++i;
                } else {
                    in_quotes = false;
                }
            } else {
                field.push_back(c);
            }
            continue;
        }
        switch (c) {
        case '"':
            if (!field.empty() || field_was_quoted)
                throw ParseError("stray quote in record " + std::to_string(record));
            in_quotes = true;
            field_was_quoted = true;
            break;
        case ',':
            end_field();
            break;
        case '\r':
            if (i + 1 < text.size() && text[i + 1] == '\n') ++i;
            end_record();
            break;
        case '\n':
            end_record();
            break;
        default:
            if (field_was_quoted)
                throw ParseError("text after closing quote in record " + std::to_string(record));
            field.push_back(c);
        }
    }
    if (in_quotes) throw ParseError("unterminated quoted field in record " + std::to_string(record));
    if (!field.empty() || !row.empty() || field_was_quoted) end_record();
    return out;
}

[[nodiscard]] inline Table read_table(std::istream& in) {
    std::string text{std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
    auto records = parse_records(text);
    if (records.empty()) throw ParseError("CSV input is empty (header row required)");
    Table t;
    t.header = std::move(records.front());
    t.rows.assign(std::make_move_iterator(records.begin() + 1), std::make_move_iterator(records.end()));
    return t;
}

[[nodiscard]] inline std::string escape(std::string_view field) {
    if (field.find_first_of(",\"\r\n") == std::string_view::npos) return std::string(field);
    std::string out = "\"";
    for (char c : field) {
        if (c == '"') out.push_back('"');
        out.push_back(c);
    }
    out.push_back('"');
    return out;
}

inline void write_row(std::ostream& os, const Row& row) {
    for (std::size_t i = 0; i < row.size(); ++i) {
        if (i) os << ',';
        os << escape(row[i]);
    }
    os << '\n';
}

/// Shortest round-trip decimal form. Non-finite values print as inf / -inf / nan.
[[nodiscard]] inline std::string format_double(double v) {
    if (std::isnan(v)) return "nan";
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    char buf[64];
    auto [p, ec] = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, p);
}

/// Fixed-point rendering with the given number of decimals.
[[nodiscard]] inline std::string format_fixed(double v, int decimals) {
    if (!std::isfinite(v)) return format_double(v);
    char buf[64];
    auto [p, ec] = std::to_chars(buf, buf + sizeof buf, v, std::chars_format::fixed, decimals);
    return std::string(buf, p);
}

/// Strict full-field numeric parse. Leading/trailing blanks are tolerated.
[[nodiscard]] inline bool parse_double(std::string_view s, double& out) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t')) s.remove_suffix(1);
    if (s.empty()) return false;
    if (s.front() == '+') s.remove_prefix(1);
    auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
    return ec == std::errc{} && p == s.data() + s.size() && std::isfinite(out);
}

[[nodiscard]] inline bool is_blank(std::string_view s) {
    return s.find_first_not_of(" \t") == std::string_view::npos;
}

} // namespace scm::csv
