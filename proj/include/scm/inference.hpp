#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "scm/csv.hpp"
#include "scm/effects.hpp"
#include "scm/error.hpp"
#include "scm/parallel.hpp"
#include "scm/solver.hpp"
#include "scm/study.hpp"

namespace scm {

/// Non-negative fraction kept unreduced, (k+1)/(J+1) as computed.
struct Rational {
    std::int64_t num = 0;
    std::int64_t den = 1;

    [[nodiscard]] double value() const { return static_cast<double>(num) / static_cast<double>(den); }

    /// Value rounded half-to-even at `decimals` places, evaluated in integer arithmetic.
    [[nodiscard]] std::string render(int decimals = 4) const {
        std::int64_t pow10 = 1;
        for (int i = 0; i < decimals; ++i) pow10 *= 10;
        const std::int64_t scaled = num * pow10;
        std::int64_t q = scaled / den;
        const std::int64_t twice_rem = 2 * (scaled % den);
        if (twice_rem > den || (twice_rem == den && q % 2 != 0)) ++q;
        if (decimals <= 0) return std::to_string(q);
        std::string frac = std::to_string(q % pow10);
        frac.insert(0, static_cast<std::size_t>(decimals) - frac.size(), '0');
        return std::to_string(q / pow10) + "." + frac;
    }

    [[nodiscard]] std::string str() const { return std::to_string(num) + "/" + std::to_string(den); }

    friend bool operator==(const Rational& a, const Rational& b) { return a.num * b.den == b.num * a.den; }
};

/// Finite-sample corrected permutation p-value (k + 1) / (J + 1).
[[nodiscard]] inline Rational permutation_p_value(std::int64_t k, std::int64_t J) {
    if (J < 1) throw InferenceError("permutation p-value needs at least one placebo");
    if (k < 0 || k > J) throw ParameterError("exceedance count must lie in [0, J]");
    return {k + 1, J + 1};
}

struct PlaceboEntry {
    std::string unit;
    bool skipped = false;
    std::string skip_reason;
    EffectSeries effect;  // meaningless when skipped
    bool converged = true;
};

struct PlaceboSet {
    std::string treated;
    EffectSeries treated_entry;
    std::vector<PlaceboEntry> entries;
    std::vector<Period> periods_pre;
    std::vector<Period> periods_post;

    [[nodiscard]] std::size_t usable() const {
        std::size_t n = 0;
        for (const auto& e : entries) n += !e.skipped;
        return n;
    }
};

/// Refits each donor of the screened pool as a pseudo-treated unit against
/// the remaining donors (the real treated unit is never a placebo donor).
/// Entries follow donor pool order regardless of `workers`.
[[nodiscard]] inline PlaceboSet run_placebos(const StudyData& study, double alpha, const SolverOptions& opts = {},
                                             std::size_t workers = 1) {
    const TimeWeights tw = time_weights(study, alpha);
    PlaceboSet ps;
    ps.treated = study.treated;
    ps.periods_pre = study.periods_pre;
    ps.periods_post = study.periods_post;
    ps.treated_entry = gaps(study, fit(study, tw, opts).weights);
    ps.entries.resize(study.num_donors());
    parallel_for(study.num_donors(), workers, [&](std::size_t j) {
        auto& entry = ps.entries[j];
        entry.unit = study.donor_labels[j];
        if (study.num_donors() - 1 < 2) {
            entry.skipped = true;
            entry.skip_reason = "placebo pool has " + std::to_string(study.num_donors() - 1) +
                                " donor(s); at least 2 are required";
            return;
        }
        const StudyData placebo = as_placebo(study, j);
        const FitResult f = fit(placebo, tw, opts);
        entry.effect = gaps(placebo, f.weights);
        entry.converged = f.converged;
    });
    return ps;
}

[[nodiscard]] inline PlaceboSet run_placebos(const Panel& panel, const StudySpec& spec, const SolverOptions& opts = {},
                                             std::size_t workers = 1) {
    return run_placebos(build_study(panel, spec), spec.alpha, opts, workers);
}

struct GapTest {
    std::int64_t k = 0;
    std::int64_t J = 0;
    Rational p;
};

struct RatioTest {
    std::int64_t k = 0;
    std::int64_t J = 0;
    Rational p;
    std::int64_t rank = 1;  // 1 = largest ratio
    std::vector<std::string> excluded_zero_pre;
};

struct InferenceReport {
    GapTest gap;
    RatioTest ratio;
};

/// Two-sided test on the post-treatment ATT: a placebo counts when its |att|
/// is at least the treated unit's.
[[nodiscard]] inline GapTest p_value_gap(const PlaceboSet& ps) {
    GapTest t;
    const double ref = std::abs(ps.treated_entry.att);
    for (const auto& e : ps.entries) {
        if (e.skipped) continue;
        ++t.J;
        if (std::abs(e.effect.att) >= ref) ++t.k;
    }
    if (t.J == 0) throw InferenceError("no usable placebo units for the gap test");
    t.p = permutation_p_value(t.k, t.J);
    return t;
}

/// Test on post/pre RMSPE ratios. Placebos with zero pre-treatment RMSPE have
/// no ratio; they are left out of both k and J and listed in the result.
[[nodiscard]] inline RatioTest p_value_ratio(const PlaceboSet& ps) {
    if (!(ps.treated_entry.rmspe_pre > 0))
        throw InferenceError("treated pre-treatment RMSPE is zero; the RMSPE ratio is undefined");
    RatioTest t;
    const double ref = ps.treated_entry.rmspe_ratio;
    for (const auto& e : ps.entries) {
        if (e.skipped) continue;
        if (!(e.effect.rmspe_pre > 0)) {
            t.excluded_zero_pre.push_back(e.unit);
            continue;
        }
        ++t.J;
        if (e.effect.rmspe_ratio >= ref) ++t.k;
    }
    if (t.J == 0) throw InferenceError("no usable placebo units for the RMSPE ratio test");
    t.p = permutation_p_value(t.k, t.J);
    t.rank = t.k + 1;
    return t;
}

[[nodiscard]] inline InferenceReport infer(const PlaceboSet& ps) { return {p_value_gap(ps), p_value_ratio(ps)}; }

/// Keeps placebos whose pre-treatment RMSPE is at most `multiplier` times the
/// treated unit's (inclusive). Skipped entries are carried along unchanged.
[[nodiscard]] inline PlaceboSet filter_placebos(const PlaceboSet& ps, double multiplier = 2.0) {
    if (!(multiplier > 0)) throw ParameterError("placebo filter multiplier must be positive");
    PlaceboSet out = ps;
    if (std::isinf(multiplier)) return out;
    const double cutoff = multiplier * ps.treated_entry.rmspe_pre;
    std::erase_if(out.entries, [&](const PlaceboEntry& e) { return !e.skipped && !(e.effect.rmspe_pre <= cutoff); });
    return out;
}

/// placebos.csv
inline void write_placebos_csv(std::ostream& os, const PlaceboSet& ps) {
    csv::write_row(os, {"unit", "att", "rmspe_pre", "rmspe_post", "rmspe_ratio", "skipped", "skip_reason"});
    for (const auto& e : ps.entries) {
        if (e.skipped) {
            csv::write_row(os, {e.unit, "", "", "", "", "true", e.skip_reason});
            continue;
        }
        csv::write_row(os, {e.unit, csv::format_double(e.effect.att), csv::format_double(e.effect.rmspe_pre),
                            csv::format_double(e.effect.rmspe_post), csv::format_double(e.effect.rmspe_ratio),
                            "false", ""});
    }
}

} // namespace scm
