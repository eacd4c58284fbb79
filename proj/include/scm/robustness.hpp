#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "scm/csv.hpp"
#include "scm/effects.hpp"
#include "scm/error.hpp"
#include "scm/inference.hpp"
#include "scm/parallel.hpp"
#include "scm/solver.hpp"
#include "scm/study.hpp"

namespace scm {

/// 100 * |att - baseline| / |baseline|; empty when the baseline is zero.
[[nodiscard]] inline std::optional<double> att_change_pct(double baseline_att, double att) {
    if (baseline_att == 0) return std::nullopt;
    return 100.0 * std::abs(att - baseline_att) / std::abs(baseline_att);
}

struct LooTargets {
    enum class Mode { TopWeight, AboveThreshold, Labels };
    Mode mode = Mode::TopWeight;
    double threshold = 0.05;  // AboveThreshold: weight strictly above this fraction
    std::vector<std::string> labels;

    static LooTargets top() { return {}; }
    static LooTargets above(double t) { return {Mode::AboveThreshold, t, {}}; }
    static LooTargets units(std::vector<std::string> l) { return {Mode::Labels, 0, std::move(l)}; }
};

struct LooResult {
    std::string excluded;
    double baseline_weight = 0;
    bool infeasible = false;
    std::string reason;
    double att = std::numeric_limits<double>::quiet_NaN();
    std::optional<double> att_change_pct;
    Eigen::VectorXd weights;  // over the reduced pool
    std::vector<std::string> donor_labels;
};

[[nodiscard]] inline std::vector<std::size_t> resolve_loo_targets(const StudyData& study, const Eigen::VectorXd& w,
                                                                  const LooTargets& targets) {
    std::vector<std::size_t> idx;
    switch (targets.mode) {
    case LooTargets::Mode::TopWeight: {
        Eigen::Index best = 0;
        w.maxCoeff(&best);  // first maximum on ties
        idx.push_back(static_cast<std::size_t>(best));
        break;
    }
    case LooTargets::Mode::AboveThreshold:
        for (Eigen::Index j = 0; j < w.size(); ++j)
            if (w(j) > targets.threshold) idx.push_back(static_cast<std::size_t>(j));
        break;
    case LooTargets::Mode::Labels:
        for (const auto& label : targets.labels) {
            std::size_t j = 0;
            while (j < study.num_donors() && study.donor_labels[j] != label) ++j;
            if (j == study.num_donors()) throw StudyError("leave-one-out target '" + label + "' is not in the donor pool");
            idx.push_back(j);
        }
        break;
    }
    return idx;
}

/// Refits with each target donor removed and compares the ATT with the
/// baseline fit on the full screened pool.
[[nodiscard]] inline std::vector<LooResult> leave_one_out(const StudyData& study, double alpha,
                                                          const LooTargets& targets, const SolverOptions& opts = {},
                                                          std::size_t workers = 1) {
    const TimeWeights tw = time_weights(study, alpha);
    const FitResult baseline = fit(study, tw, opts);
    const double baseline_att = gaps(study, baseline.weights).att;
    const auto idx = resolve_loo_targets(study, baseline.weights, targets);

    std::vector<LooResult> out(idx.size());
    parallel_for(idx.size(), workers, [&](std::size_t i) {
        const std::size_t j = idx[i];
        auto& r = out[i];
        r.excluded = study.donor_labels[j];
        r.baseline_weight = baseline.weights(static_cast<Eigen::Index>(j));
        if (study.num_donors() - 1 < 2) {
            r.infeasible = true;
            r.reason = "pool would have fewer than 2 donors";
            return;
        }
        const StudyData reduced = without_donor(study, j);
        const FitResult f = fit(reduced, tw, opts);
        r.att = gaps(reduced, f.weights).att;
        r.att_change_pct = att_change_pct(baseline_att, r.att);
        r.weights = f.weights;
        r.donor_labels = reduced.donor_labels;
    });
    return out;
}

[[nodiscard]] inline std::vector<LooResult> leave_one_out(const Panel& panel, const StudySpec& spec,
                                                          const LooTargets& targets, const SolverOptions& opts = {},
                                                          std::size_t workers = 1) {
    return leave_one_out(build_study(panel, spec), spec.alpha, targets, opts, workers);
}

struct AlphaSweepRow {
    double alpha = 0;
    double att = 0;
    double rmspe_pre = 0;
    std::optional<Rational> p_ratio;
};

/// One fit per decay rate over the same screened pool and windows.
[[nodiscard]] inline std::vector<AlphaSweepRow> alpha_sweep(const StudyData& study, std::span<const double> alphas,
                                                            const SolverOptions& opts = {}, bool with_placebos = false,
                                                            std::size_t workers = 1) {
    for (double a : alphas)
        if (!(a >= 0) || !std::isfinite(a)) throw ParameterError("alpha sweep values must be finite and >= 0");
    std::vector<AlphaSweepRow> rows;
    rows.reserve(alphas.size());
    for (double a : alphas) {
        const EffectSeries e = gaps(study, fit(study, time_weights(study, a), opts).weights);
        AlphaSweepRow row{a, e.att, e.rmspe_pre, std::nullopt};
        if (with_placebos) row.p_ratio = p_value_ratio(run_placebos(study, a, opts, workers)).p;
        rows.push_back(row);
    }
    return rows;
}

[[nodiscard]] inline std::vector<AlphaSweepRow> alpha_sweep(const Panel& panel, const StudySpec& spec,
                                                            std::span<const double> alphas,
                                                            const SolverOptions& opts = {}, bool with_placebos = false,
                                                            std::size_t workers = 1) {
    return alpha_sweep(build_study(panel, spec), alphas, opts, with_placebos, workers);
}

/// loo.csv
inline void write_loo_csv(std::ostream& os, const std::vector<LooResult>& rows) {
    csv::write_row(os, {"excluded", "baseline_weight", "att", "att_change_pct", "infeasible"});
    for (const auto& r : rows)
        csv::write_row(os, {r.excluded, csv::format_double(r.baseline_weight),
                            r.infeasible ? "" : csv::format_double(r.att),
                            r.att_change_pct ? csv::format_double(*r.att_change_pct) : "",
                            r.infeasible ? "true" : "false"});
}

/// alpha_sweep.csv
inline void write_alpha_sweep_csv(std::ostream& os, const std::vector<AlphaSweepRow>& rows) {
    csv::write_row(os, {"alpha", "att", "rmspe_pre", "p_ratio"});
    for (const auto& r : rows)
        csv::write_row(os, {csv::format_double(r.alpha), csv::format_double(r.att), csv::format_double(r.rmspe_pre),
                            r.p_ratio ? r.p_ratio->render(4) : ""});
}

} // namespace scm
