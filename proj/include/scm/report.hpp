#pragma once

// Tables and plot-ready datasets derived from fitted studies. Nothing here
// plots; every file is a flat CSV that a plotting tool can consume directly.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <ostream>
#include <string>
#include <vector>

#include "scm/csv.hpp"
#include "scm/effects.hpp"
#include "scm/error.hpp"
#include "scm/inference.hpp"
#include "scm/study.hpp"

namespace scm {

/// Whole-dollar display value, half away from zero.
[[nodiscard]] inline long long round_dollars(double v) { return std::llround(v); }

struct WeightRow {
    std::string label;
    double weight = 0;        // exact fraction
    long long hundredths = 0;  // displayed percent x 100
};

/// Donor weights sorted descending. Donors at or above `cutoff` get their own
/// row; the rest collapse into an "Others" row. Displayed percentages are
/// apportioned by largest remainder so they add to exactly 100.00.
struct WeightTable {
    std::vector<WeightRow> rows;
    bool has_others = false;
    WeightRow others;
    std::size_t others_nonzero = 0;

    [[nodiscard]] static std::string percent(long long hundredths) {
        return std::to_string(hundredths / 100) + "." + (hundredths % 100 < 10 ? "0" : "") +
               std::to_string(hundredths % 100);
    }
};

[[nodiscard]] inline WeightTable weight_table(const std::vector<std::string>& labels, const Eigen::VectorXd& w,
                                              double cutoff = 0.05) {
    if (labels.size() != static_cast<std::size_t>(w.size()))
        throw ParameterError("weight table: label and weight counts differ");
    std::vector<std::size_t> order(labels.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) {
        return w(static_cast<Eigen::Index>(a)) > w(static_cast<Eigen::Index>(b));
    });

    WeightTable t;
    t.others.label = "Others";
    for (auto j : order) {
        const double wj = w(static_cast<Eigen::Index>(j));
        if (wj >= cutoff) {
            t.rows.push_back({labels[j], wj, 0});
        } else {
            t.has_others = true;
            t.others.weight += wj;
            t.others_nonzero += wj > 0;
        }
    }

    std::vector<WeightRow*> buckets;
    for (auto& r : t.rows) buckets.push_back(&r);
    if (t.has_others) buckets.push_back(&t.others);
    long long assigned = 0;
    std::vector<std::pair<double, std::size_t>> remainders;
    for (std::size_t i = 0; i < buckets.size(); ++i) {
        const double exact = buckets[i]->weight * 10000.0;
        buckets[i]->hundredths = static_cast<long long>(std::floor(exact));
        assigned += buckets[i]->hundredths;
        remainders.emplace_back(exact - std::floor(exact), i);
    }
    std::stable_sort(remainders.begin(), remainders.end(), [](auto& a, auto& b) { return a.first > b.first; });
    for (long long left = 10000 - assigned, i = 0; left > 0 && !remainders.empty(); --left, ++i)
        ++buckets[remainders[static_cast<std::size_t>(i) % remainders.size()].second]->hundredths;
    return t;
}

/// weights.csv: every donor in pool order, exact weight and percent.
inline void write_weights_csv(std::ostream& os, const std::vector<std::string>& labels, const Eigen::VectorXd& w) {
    csv::write_row(os, {"unit", "weight", "weight_pct"});
    for (std::size_t j = 0; j < labels.size(); ++j) {
        const double wj = w(static_cast<Eigen::Index>(j));
        csv::write_row(os, {labels[j], csv::format_double(wj), csv::format_double(100.0 * wj)});
    }
}

/// Empirical quantile with linear interpolation between order statistics
/// (position (n - 1) * q in the sorted sample).
[[nodiscard]] inline double quantile(std::vector<double> xs, double q) {
    if (xs.empty()) throw ParameterError("quantile of an empty sample");
    if (!(q >= 0 && q <= 1)) throw ParameterError("quantile level must lie in [0, 1]");
    std::sort(xs.begin(), xs.end());
    const double h = static_cast<double>(xs.size() - 1) * q;
    const auto lo = static_cast<std::size_t>(std::floor(h));
    if (lo + 1 >= xs.size()) return xs.back();
    return xs[lo] + (h - static_cast<double>(lo)) * (xs[lo + 1] - xs[lo]);
}

/// trajectory.csv: period, treated, synthetic over both windows.
inline void write_trajectory_csv(std::ostream& os, const StudyData& study, const EffectSeries& e) {
    csv::write_row(os, {"period", "window", "treated", "synthetic"});
    for (std::size_t t = 0; t < study.num_pre(); ++t) {
        const auto i = static_cast<Eigen::Index>(t);
        csv::write_row(os, {study.periods_pre[t].str(), "pre", csv::format_double(study.treated_pre(i)),
                            csv::format_double(e.synthetic_pre(i))});
    }
    for (std::size_t t = 0; t < study.num_post(); ++t) {
        const auto i = static_cast<Eigen::Index>(t);
        csv::write_row(os, {study.periods_post[t].str(), "post", csv::format_double(study.treated_post(i)),
                            csv::format_double(e.synthetic_post(i))});
    }
}

/// Placebo gap paths: one column per usable placebo, the treated gap, and the
/// 5th / 95th percentile of the placebo gaps in each period.
inline void write_placebo_gaps_csv(std::ostream& os, const PlaceboSet& ps) {
    std::vector<const PlaceboEntry*> used;
    for (const auto& e : ps.entries)
        if (!e.skipped) used.push_back(&e);

    csv::Row header{"period", "window"};
    for (auto* e : used) header.push_back(e->unit);
    header.insert(header.end(), {"treated", "p05", "p95"});
    csv::write_row(os, header);

    auto emit = [&](const Period& per, const char* window, Eigen::Index i, bool post) {
        csv::Row row{per.str(), window};
        std::vector<double> sample;
        for (auto* e : used) {
            const double g = post ? e->effect.gaps_post(i) : e->effect.gaps_pre(i);
            sample.push_back(g);
            row.push_back(csv::format_double(g));
        }
        row.push_back(csv::format_double(post ? ps.treated_entry.gaps_post(i) : ps.treated_entry.gaps_pre(i)));
        if (sample.empty()) {
            row.insert(row.end(), {"", ""});
        } else {
            row.push_back(csv::format_double(quantile(sample, 0.05)));
            row.push_back(csv::format_double(quantile(sample, 0.95)));
        }
        csv::write_row(os, row);
    };
    for (std::size_t t = 0; t < ps.periods_pre.size(); ++t)
        emit(ps.periods_pre[t], "pre", static_cast<Eigen::Index>(t), false);
    for (std::size_t t = 0; t < ps.periods_post.size(); ++t)
        emit(ps.periods_post[t], "post", static_cast<Eigen::Index>(t), true);
}

struct RankedRatio {
    std::size_t rank = 0;
    std::string unit;
    double ratio = 0;
    bool is_treated = false;
};

/// Treated unit and usable placebos by descending RMSPE ratio. Ties place
/// placebos ahead of the treated unit, matching the >= count in p_value_ratio.
[[nodiscard]] inline std::vector<RankedRatio> ratio_ranking(const PlaceboSet& ps) {
    std::vector<RankedRatio> out;
    out.push_back({0, ps.treated, ps.treated_entry.rmspe_ratio, true});
    for (const auto& e : ps.entries)
        if (!e.skipped && e.effect.rmspe_pre > 0) out.push_back({0, e.unit, e.effect.rmspe_ratio, false});
    std::stable_sort(out.begin(), out.end(), [](const RankedRatio& a, const RankedRatio& b) {
        if (a.ratio != b.ratio) return a.ratio > b.ratio;
        return !a.is_treated && b.is_treated;
    });
    for (std::size_t i = 0; i < out.size(); ++i) out[i].rank = i + 1;
    return out;
}

inline void write_ratio_ranking_csv(std::ostream& os, const PlaceboSet& ps) {
    csv::write_row(os, {"rank", "unit", "rmspe_ratio", "is_treated"});
    for (const auto& r : ratio_ranking(ps))
        csv::write_row(os, {std::to_string(r.rank), r.unit, csv::format_double(r.ratio), r.is_treated ? "1" : "0"});
}

} // namespace scm
