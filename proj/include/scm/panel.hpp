#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <istream>
#include <limits>
#include <map>
#include <optional>
#include <ostream>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <utility>
#include <vector>

#include "scm/csv.hpp"
#include "scm/error.hpp"
#include "scm/period.hpp"

namespace scm {

/// Rectangular unit x month matrix of outcome levels. Missing cells are tracked
/// by a mask and hold NaN in the value matrix. Immutable once built.
class Panel {
public:
    using Mask = Eigen::Array<bool, Eigen::Dynamic, Eigen::Dynamic>;

    Panel() = default;

    Panel(std::vector<std::string> units, Period first, Eigen::MatrixXd values, Mask missing)
        : units_(std::move(units)), first_(first), values_(std::move(values)), missing_(std::move(missing)) {
        if (static_cast<std::size_t>(values_.rows()) != units_.size())
            throw ValidationError("value matrix has " + std::to_string(values_.rows()) + " rows for " +
                                  std::to_string(units_.size()) + " units");
        if (missing_.rows() != values_.rows() || missing_.cols() != values_.cols())
            throw ValidationError("missing-value mask does not match value matrix dimensions");
        std::unordered_set<std::string> seen;
        for (const auto& u : units_)
            if (!seen.insert(u).second) throw ValidationError("duplicate unit label '" + u + "'");
        for (Eigen::Index i = 0; i < values_.rows(); ++i)
            for (Eigen::Index j = 0; j < values_.cols(); ++j)
                if (missing_(i, j)) values_(i, j) = std::numeric_limits<double>::quiet_NaN();
    }

    /// Convenience constructor for fully observed data.
    Panel(std::vector<std::string> units, Period first, Eigen::MatrixXd values)
        : Panel(std::move(units), first, values, Mask::Constant(values.rows(), values.cols(), false)) {}

    [[nodiscard]] const std::vector<std::string>& units() const { return units_; }
    [[nodiscard]] std::size_t num_units() const { return units_.size(); }
    [[nodiscard]] std::size_t num_periods() const { return static_cast<std::size_t>(values_.cols()); }
    [[nodiscard]] Period first_period() const { return first_; }
    [[nodiscard]] Period last_period() const { return first_.plus(static_cast<long>(num_periods()) - 1); }
    [[nodiscard]] Period period(std::size_t col) const { return first_.plus(static_cast<long>(col)); }
    [[nodiscard]] std::vector<Period> periods() const {
        std::vector<Period> out;
        out.reserve(num_periods());
        for (std::size_t c = 0; c < num_periods(); ++c) out.push_back(period(c));
        return out;
    }

    [[nodiscard]] const Eigen::MatrixXd& values() const { return values_; }
    [[nodiscard]] const Mask& missing() const { return missing_; }
    [[nodiscard]] bool is_missing(std::size_t unit, std::size_t col) const {
        return missing_(static_cast<Eigen::Index>(unit), static_cast<Eigen::Index>(col));
    }
    [[nodiscard]] double value(std::size_t unit, std::size_t col) const {
        return values_(static_cast<Eigen::Index>(unit), static_cast<Eigen::Index>(col));
    }

    [[nodiscard]] std::optional<std::size_t> find_unit(std::string_view label) const {
        for (std::size_t i = 0; i < units_.size(); ++i)
            if (units_[i] == label) return i;
        return std::nullopt;
    }

    [[nodiscard]] bool contains(Period p) const {
        return num_periods() > 0 && first_ <= p && p <= last_period();
    }

    /// Column of period p. Throws RangeError outside the panel.
    [[nodiscard]] std::size_t column_of(Period p) const {
        if (!contains(p))
            throw RangeError("period " + p.str() + " outside panel range " + first_.str() + ".." +
                             last_period().str());
        return static_cast<std::size_t>(p.index() - first_.index());
    }

    friend bool operator==(const Panel& a, const Panel& b) {
        if (a.units_ != b.units_ || a.first_ != b.first_ || a.values_.rows() != b.values_.rows() ||
            a.values_.cols() != b.values_.cols() || (a.missing_ != b.missing_).any())
            return false;
        for (Eigen::Index i = 0; i < a.values_.rows(); ++i)
            for (Eigen::Index j = 0; j < a.values_.cols(); ++j)
                if (!a.missing_(i, j) && a.values_(i, j) != b.values_(i, j)) return false;
        return true;
    }

private:
    std::vector<std::string> units_;
    Period first_;
    Eigen::MatrixXd values_;
    Mask missing_;
};

enum class DateFormat { Auto, YearMonth, YearMonthDay };

/// Column mapping for the wide (one row per region, one column per month) layout.
struct WideLayout {
    std::string region_column = "RegionName";
    DateFormat date_format = DateFormat::Auto;
    /// Keep only rows whose column `first` equals `second` (e.g. {"State", "CA"}).
    /// Every remaining data row becomes a unit.
    std::optional<std::pair<std::string, std::string>> row_filter;
};

struct LongLayout {
    std::string unit_column = "unit";
    std::string period_column = "period";
    std::string value_column = "value";
};

namespace detail {

inline std::optional<Period> header_period(const std::string& h, DateFormat fmt) {
    auto p = try_parse_period(h);
    if (!p) return std::nullopt;
    if (fmt == DateFormat::YearMonth && h.size() != 7) return std::nullopt;
    if (fmt == DateFormat::YearMonthDay && h.size() != 10) return std::nullopt;
    return p;
}

// Headers that start like a date (four digits and a dash) are meant to be months.
inline bool looks_like_date(const std::string& h) {
    if (h.size() < 5 || h[4] != '-') return false;
    for (int i = 0; i < 4; ++i)
        if (h[i] < '0' || h[i] > '9') return false;
    return true;
}

inline std::size_t require_column(const csv::Row& header, const std::string& name) {
    for (std::size_t i = 0; i < header.size(); ++i)
        if (header[i] == name) return i;
    throw ParseError("missing required column '" + name + "' in header");
}

inline double parse_cell(const std::string& cell, std::size_t row, const std::string& column) {
    double v = 0;
    if (!csv::parse_double(cell, v))
        throw ParseError("non-numeric value '" + cell + "' at row " + std::to_string(row) + ", column '" +
                         column + "'");
    return v;
}

} // namespace detail

/// Reads a wide-format panel. Rows are numbered as in the file (header = row 1).
[[nodiscard]] inline Panel load_panel(std::istream& in, const WideLayout& layout = {}) {
    auto table = csv::read_table(in);
    const auto& header = table.header;
    const std::size_t region_col = detail::require_column(header, layout.region_column);

    std::optional<std::size_t> filter_col;
    if (layout.row_filter) filter_col = detail::require_column(header, layout.row_filter->first);

    std::vector<std::size_t> month_cols;
    std::optional<Period> first;
    for (std::size_t c = 0; c < header.size(); ++c) {
        if (c == region_col) continue;
        auto p = detail::header_period(header[c], layout.date_format);
        if (!p) {
            if (detail::looks_like_date(header[c]))
                throw ParseError("malformed month column header '" + header[c] + "'");
            continue;
        }
        if (!first) {
            first = p;
        } else if (p->index() != first->index() + static_cast<long>(month_cols.size())) {
            throw ParseError("month column '" + header[c] + "' breaks the contiguous monthly sequence (expected " +
                             first->plus(static_cast<long>(month_cols.size())).str() + ")");
        }
        month_cols.push_back(c);
    }
    if (month_cols.empty()) throw ParseError("no month columns found in header");

    std::vector<std::string> units;
    std::vector<std::vector<std::pair<double, bool>>> cells;
    for (std::size_t r = 0; r < table.rows.size(); ++r) {
        const auto& row = table.rows[r];
        const std::size_t file_row = r + 2;
        if (row.size() != header.size())
            throw ParseError("row " + std::to_string(file_row) + " has " + std::to_string(row.size()) +
                             " fields, header has " + std::to_string(header.size()));
        if (filter_col && row[*filter_col] != layout.row_filter->second) continue;
        units.push_back(row[region_col]);
        auto& out = cells.emplace_back();
        for (auto c : month_cols) {
            if (csv::is_blank(row[c]))
                out.emplace_back(0.0, true);
            else
                out.emplace_back(detail::parse_cell(row[c], file_row, header[c]), false);
        }
    }

    const auto n = static_cast<Eigen::Index>(units.size());
    const auto t = static_cast<Eigen::Index>(month_cols.size());
    Eigen::MatrixXd values(n, t);
    Panel::Mask missing(n, t);
    for (Eigen::Index i = 0; i < n; ++i)
        for (Eigen::Index j = 0; j < t; ++j) {
            values(i, j) = cells[i][j].first;
            missing(i, j) = cells[i][j].second;
        }
    return Panel(std::move(units), *first, std::move(values), std::move(missing));
}

/// Reads a long-format (unit, period, value) panel. Units keep first-appearance
/// order; the period range spans the earliest to latest period seen and absent
/// or blank cells are marked missing.
[[nodiscard]] inline Panel load_panel_long(std::istream& in, const LongLayout& layout = {}) {
    auto table = csv::read_table(in);
    const auto uc = detail::require_column(table.header, layout.unit_column);
    const auto pc = detail::require_column(table.header, layout.period_column);
    const auto vc = detail::require_column(table.header, layout.value_column);

    std::vector<std::string> units;
    std::unordered_map<std::string, std::size_t> unit_index;
    std::map<std::pair<std::size_t, long>, std::optional<double>> obs;
    long lo = std::numeric_limits<long>::max(), hi = std::numeric_limits<long>::min();

    for (std::size_t r = 0; r < table.rows.size(); ++r) {
        const auto& row = table.rows[r];
        const std::size_t file_row = r + 2;
        if (row.size() != table.header.size())
            throw ParseError("row " + std::to_string(file_row) + " has " + std::to_string(row.size()) +
                             " fields, header has " + std::to_string(table.header.size()));
        auto p = try_parse_period(row[pc]);
        if (!p)
            throw ParseError("invalid period '" + row[pc] + "' at row " + std::to_string(file_row) + ", column '" +
                             layout.period_column + "'");
        auto [it, inserted] = unit_index.try_emplace(row[uc], units.size());
        if (inserted) units.push_back(row[uc]);
        std::optional<double> v;
        if (!csv::is_blank(row[vc])) v = detail::parse_cell(row[vc], file_row, layout.value_column);
        if (!obs.emplace(std::pair{it->second, p->index()}, v).second)
            throw ValidationError("duplicate observation for unit '" + row[uc] + "' at " + p->str() + " (row " +
                                  std::to_string(file_row) + ")");
        lo = std::min(lo, p->index());
        hi = std::max(hi, p->index());
    }
    if (units.empty()) throw ParseError("long-format panel has no data rows");

    const auto n = static_cast<Eigen::Index>(units.size());
    const auto t = static_cast<Eigen::Index>(hi - lo + 1);
    Eigen::MatrixXd values = Eigen::MatrixXd::Zero(n, t);
    Panel::Mask missing = Panel::Mask::Constant(n, t, true);
    for (const auto& [key, v] : obs) {
        if (!v) continue;
        values(static_cast<Eigen::Index>(key.first), key.second - lo) = *v;
        missing(static_cast<Eigen::Index>(key.first), key.second - lo) = false;
    }
    return Panel(std::move(units), Period::from_index(lo), std::move(values), std::move(missing));
}

/// Sub-panel over the inclusive window [from, to]; unit order is preserved.
[[nodiscard]] inline Panel slice_panel(const Panel& p, Period from, Period to) {
    if (to < from) throw RangeError("slice window is empty: " + from.str() + " > " + to.str());
    const auto a = static_cast<Eigen::Index>(p.column_of(from));
    const auto b = static_cast<Eigen::Index>(p.column_of(to));
    const auto len = b - a + 1;
    Eigen::MatrixXd v = p.values().middleCols(a, len);
    Panel::Mask m = p.missing().middleCols(a, len);
    return Panel(p.units(), from, std::move(v), std::move(m));
}

inline void write_panel_wide(std::ostream& os, const Panel& p, const std::string& region_column = "RegionName") {
    csv::Row header{region_column};
    for (const auto& per : p.periods()) header.push_back(per.str());
    csv::write_row(os, header);
    for (std::size_t u = 0; u < p.num_units(); ++u) {
        csv::Row row{p.units()[u]};
        for (std::size_t c = 0; c < p.num_periods(); ++c)
            row.push_back(p.is_missing(u, c) ? std::string() : csv::format_double(p.value(u, c)));
        csv::write_row(os, row);
    }
}

/// Long form writes one row per cell, with an empty value for missing cells so
/// that re-loading restores the full period range and mask.
inline void write_panel_long(std::ostream& os, const Panel& p, const LongLayout& layout = {}) {
    csv::write_row(os, {layout.unit_column, layout.period_column, layout.value_column});
    for (std::size_t u = 0; u < p.num_units(); ++u)
        for (std::size_t c = 0; c < p.num_periods(); ++c)
            csv::write_row(os, {p.units()[u], p.period(c).str(),
                                p.is_missing(u, c) ? std::string() : csv::format_double(p.value(u, c))});
}

} // namespace scm
