#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "scm/error.hpp"
#include "scm/panel.hpp"
#include "scm/period.hpp"

namespace scm {

struct DonorScreen {
    bool require_complete = true;
    std::optional<double> min_pre_correlation;
};

/// Study design. `intervention` is the last pre-treatment month; the post
/// window starts the month after it.
struct StudySpec {
    std::string treated;
    Period intervention;
    Period pre_start;
    Period post_end;
    double alpha = 0.005;
    DonorScreen donor_screen;
    /// Candidate donor pool. Empty means every unit other than the treated one.
    std::vector<std::string> donors;
};

inline void validate(const StudySpec& spec) {
    if (spec.treated.empty()) throw ParameterError("treated unit is not set");
    if (!(spec.pre_start <= spec.intervention))
        throw ParameterError("pre_start " + spec.pre_start.str() + " is after intervention " + spec.intervention.str());
    if (!(spec.intervention < spec.post_end))
        throw ParameterError("post_end " + spec.post_end.str() + " must be after intervention " +
                             spec.intervention.str());
    if (!(spec.alpha >= 0) || !std::isfinite(spec.alpha))
        throw ParameterError("alpha must be a finite non-negative number");
    if (auto r = spec.donor_screen.min_pre_correlation; r && !(*r >= -1.0 && *r <= 1.0))
        throw ParameterError("min_pre_correlation must lie in [-1, 1]");
}

struct DonorExclusion {
    std::string label;
    std::string reason;
};

/// Outcome paths of one treated unit and its screened donors, split at the
/// intervention. Donor matrices are donor x period. No value is missing.
struct StudyData {
    std::string treated;
    Eigen::VectorXd treated_pre;
    Eigen::VectorXd treated_post;
    Eigen::MatrixXd donors_pre;
    Eigen::MatrixXd donors_post;
    std::vector<std::string> donor_labels;
    std::vector<Period> periods_pre;
    std::vector<Period> periods_post;
    std::vector<DonorExclusion> excluded;
    /// Donors kept with interior gaps filled (only when completeness is not required).
    std::vector<std::string> interpolated;

    [[nodiscard]] std::size_t num_donors() const { return donor_labels.size(); }
    [[nodiscard]] std::size_t num_pre() const { return periods_pre.size(); }
    [[nodiscard]] std::size_t num_post() const { return periods_post.size(); }
};

/// Pearson correlation; NaN when either series is constant.
[[nodiscard]] inline double pearson(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
    const Eigen::ArrayXd da = a.array() - a.mean();
    const Eigen::ArrayXd db = b.array() - b.mean();
    const double saa = (da * da).sum(), sbb = (db * db).sum();
    if (saa == 0 || sbb == 0) return std::numeric_limits<double>::quiet_NaN();
    return (da * db).sum() / std::sqrt(saa * sbb);
}

namespace detail {

// Fills interior gaps of a row by linear interpolation between the nearest
// observed months. Returns false if the first or last cell is missing.
inline bool interpolate_row(Eigen::Ref<Eigen::RowVectorXd> row, const std::vector<bool>& miss) {
    const auto n = static_cast<std::size_t>(row.size());
    if (n == 0 || miss.front() || miss.back()) return false;
    std::size_t left = 0;
    for (std::size_t i = 1; i < n; ++i) {
        if (miss[i]) continue;
        for (std::size_t k = left + 1; k < i; ++k) {
            const double f = static_cast<double>(k - left) / static_cast<double>(i - left);
            row(static_cast<Eigen::Index>(k)) = (1 - f) * row(static_cast<Eigen::Index>(left)) +
                                                f * row(static_cast<Eigen::Index>(i));
        }
        left = i;
    }
    return true;
}

} // namespace detail

/// Binds a panel to a study design and screens the donor pool. Filtering is
/// stable: surviving donors keep their panel (or `spec.donors`) order.
[[nodiscard]] inline StudyData build_study(const Panel& p, const StudySpec& spec) {
    validate(spec);
    const auto treated_idx = p.find_unit(spec.treated);
    if (!treated_idx) throw StudyError("treated unit '" + spec.treated + "' not found in panel");

    const std::size_t c0 = p.column_of(spec.pre_start);
    const std::size_t c_end = p.column_of(spec.intervention);
    const std::size_t c_last = p.column_of(spec.post_end);
    const auto n_pre = static_cast<Eigen::Index>(c_end - c0 + 1);
    const auto n_post = static_cast<Eigen::Index>(c_last - c_end);
    const auto n_all = n_pre + n_post;

    for (std::size_t c = c0; c <= c_last; ++c)
        if (p.is_missing(*treated_idx, c))
            throw StudyError("treated unit '" + spec.treated + "' is missing a value at " + p.period(c).str());

    std::vector<std::size_t> candidates;
    if (spec.donors.empty()) {
        for (std::size_t u = 0; u < p.num_units(); ++u)
            if (u != *treated_idx) candidates.push_back(u);
    } else {
        for (const auto& label : spec.donors) {
            auto u = p.find_unit(label);
            if (!u) throw StudyError("donor '" + label + "' not found in panel");
            if (*u == *treated_idx) throw StudyError("treated unit '" + label + "' listed as a donor");
            if (std::find(candidates.begin(), candidates.end(), *u) != candidates.end())
                throw StudyError("donor '" + label + "' listed twice");
            candidates.push_back(*u);
        }
    }

    StudyData out;
    out.treated = spec.treated;
    const Eigen::RowVectorXd treated_row =
        p.values().row(static_cast<Eigen::Index>(*treated_idx)).segment(static_cast<Eigen::Index>(c0), n_all);
    out.treated_pre = treated_row.head(n_pre).transpose();
    out.treated_post = treated_row.tail(n_post).transpose();
    for (std::size_t c = c0; c <= c_end; ++c) out.periods_pre.push_back(p.period(c));
    for (std::size_t c = c_end + 1; c <= c_last; ++c) out.periods_post.push_back(p.period(c));

    std::vector<Eigen::RowVectorXd> kept_rows;
    for (auto u : candidates) {
        const auto& label = p.units()[u];
        Eigen::RowVectorXd row =
            p.values().row(static_cast<Eigen::Index>(u)).segment(static_cast<Eigen::Index>(c0), n_all);
        std::vector<bool> miss(static_cast<std::size_t>(n_all));
        std::size_t n_missing = 0;
        for (Eigen::Index k = 0; k < n_all; ++k) {
            miss[static_cast<std::size_t>(k)] = p.is_missing(u, c0 + static_cast<std::size_t>(k));
            n_missing += miss[static_cast<std::size_t>(k)];
        }
        if (n_missing > 0) {
            if (spec.donor_screen.require_complete) {
                out.excluded.push_back({label, std::to_string(n_missing) + " missing value(s) in study window"});
                continue;
            }
            if (!detail::interpolate_row(row, miss)) {
                out.excluded.push_back({label, "missing value at a study window boundary"});
                continue;
            }
            out.interpolated.push_back(label);
        }
        if (auto threshold = spec.donor_screen.min_pre_correlation) {
            const double r = pearson(out.treated_pre, row.head(n_pre).transpose());
            if (std::isnan(r)) {
                out.excluded.push_back({label, "pre-window correlation undefined (constant series)"});
                continue;
            }
            if (r < *threshold) {
                out.excluded.push_back({label, "pre-window correlation " + csv::format_fixed(r, 4) +
                                                   " below " + csv::format_fixed(*threshold, 4)});
                continue;
            }
        }
        out.donor_labels.push_back(label);
        kept_rows.push_back(std::move(row));
    }

    if (kept_rows.size() < 2)
        throw StudyError("donor pool has " + std::to_string(kept_rows.size()) +
                         " unit(s) after screening; at least 2 are required");

    const auto j = static_cast<Eigen::Index>(kept_rows.size());
    out.donors_pre.resize(j, n_pre);
    out.donors_post.resize(j, n_post);
    for (Eigen::Index d = 0; d < j; ++d) {
        out.donors_pre.row(d) = kept_rows[static_cast<std::size_t>(d)].head(n_pre);
        out.donors_post.row(d) = kept_rows[static_cast<std::size_t>(d)].tail(n_post);
    }
    return out;
}

/// Offsets t - T_end for each pre-window month: the last pre month is 0,
/// earlier months are negative.
[[nodiscard]] inline std::vector<int> pre_period_index(const StudySpec& spec) {
    validate(spec);
    const auto n = static_cast<int>(months_between(spec.pre_start, spec.intervention));
    std::vector<int> out(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) out[static_cast<std::size_t>(i)] = i - (n - 1);
    return out;
}

[[nodiscard]] inline std::vector<int> pre_period_index(const StudyData& study) {
    const auto n = static_cast<int>(study.num_pre());
    std::vector<int> out(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) out[static_cast<std::size_t>(i)] = i - (n - 1);
    return out;
}

/// Same study with donor `index` removed from the pool.
[[nodiscard]] inline StudyData without_donor(const StudyData& s, std::size_t index) {
    if (index >= s.num_donors()) throw ParameterError("donor index out of range");
    if (s.num_donors() - 1 < 2)
        throw StudyError("removing '" + s.donor_labels[index] + "' leaves fewer than 2 donors");
    StudyData out = s;
    const auto j = static_cast<Eigen::Index>(s.num_donors());
    const auto i = static_cast<Eigen::Index>(index);
    auto drop_row = [&](const Eigen::MatrixXd& m) {
        Eigen::MatrixXd r(j - 1, m.cols());
        r.topRows(i) = m.topRows(i);
        r.bottomRows(j - 1 - i) = m.bottomRows(j - 1 - i);
        return r;
    };
    out.donors_pre = drop_row(s.donors_pre);
    out.donors_post = drop_row(s.donors_post);
    out.donor_labels.erase(out.donor_labels.begin() + static_cast<std::ptrdiff_t>(index));
    out.excluded.push_back({s.donor_labels[index], "removed from pool"});
    return out;
}

/// Study in which donor `index` plays the treated unit against the rest of the
/// screened pool. The original treated unit is not part of that pool.
[[nodiscard]] inline StudyData as_placebo(const StudyData& s, std::size_t index) {
    if (index >= s.num_donors()) throw ParameterError("donor index out of range");
    if (s.num_donors() - 1 < 2)
        throw StudyError("placebo '" + s.donor_labels[index] + "' would have " +
                         std::to_string(s.num_donors() - 1) + " donor(s); at least 2 are required");
    StudyData out = without_donor(s, index);
    out.treated = s.donor_labels[index];
    out.treated_pre = s.donors_pre.row(static_cast<Eigen::Index>(index)).transpose();
    out.treated_post = s.donors_post.row(static_cast<Eigen::Index>(index)).transpose();
    out.excluded.clear();
    out.interpolated.clear();
    return out;
}

} // namespace scm
