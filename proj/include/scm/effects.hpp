#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <limits>
#include <ostream>

#include "scm/csv.hpp"
#include "scm/error.hpp"
#include "scm/study.hpp"

namespace scm {

/// Treated-minus-synthetic gaps and their summaries. RMSPE values are
/// unweighted; the decay weights only enter the solver loss.
struct EffectSeries {
    Eigen::VectorXd synthetic_pre;
    Eigen::VectorXd synthetic_post;
    Eigen::VectorXd gaps_pre;
    Eigen::VectorXd gaps_post;
    double att = 0;
    double rmspe_pre = 0;
    double rmspe_post = 0;
    /// rmspe_post / rmspe_pre; +inf when rmspe_pre is zero (see ratio_defined).
    double rmspe_ratio = 0;
    bool ratio_defined = true;
    /// rmspe_pre as a fraction of the treated unit's mean pre-treatment level.
    double rmspe_pre_relative = 0;
};

[[nodiscard]] inline double rmspe(const Eigen::VectorXd& residuals) {
    if (residuals.size() == 0) throw ParameterError("RMSPE of an empty residual vector");
    return std::sqrt(residuals.squaredNorm() / static_cast<double>(residuals.size()));
}

[[nodiscard]] inline double relative_pre_rmspe(double rmspe_pre, const Eigen::VectorXd& treated_pre) {
    const double level = treated_pre.size() > 0 ? treated_pre.mean() : 0.0;
    if (!(level > 0)) throw ParameterError("mean pre-treatment level must be positive for a relative RMSPE");
    return rmspe_pre / level;
}

[[nodiscard]] inline double relative_pre_rmspe(const EffectSeries& e, const StudyData& study) {
    return relative_pre_rmspe(e.rmspe_pre, study.treated_pre);
}

[[nodiscard]] inline EffectSeries gaps(const StudyData& study, const Eigen::VectorXd& w) {
    if (static_cast<std::size_t>(w.size()) != study.num_donors())
        throw ParameterError("weight vector has " + std::to_string(w.size()) + " entries for " +
                             std::to_string(study.num_donors()) + " donors");
    EffectSeries e;
    e.synthetic_pre = study.donors_pre.transpose() * w;
    e.synthetic_post = study.donors_post.transpose() * w;
    e.gaps_pre = study.treated_pre - e.synthetic_pre;
    e.gaps_post = study.treated_post - e.synthetic_post;
    e.att = e.gaps_post.mean();
    e.rmspe_pre = rmspe(e.gaps_pre);
    e.rmspe_post = rmspe(e.gaps_post);
    if (e.rmspe_pre > 0) {
        e.rmspe_ratio = e.rmspe_post / e.rmspe_pre;
    } else {
        e.rmspe_ratio = std::numeric_limits<double>::infinity();
        e.ratio_defined = false;
    }
    const double level = study.treated_pre.mean();
    e.rmspe_pre_relative = level > 0 ? e.rmspe_pre / level : std::numeric_limits<double>::quiet_NaN();
    return e;
}

/// gaps.csv: one row per period over both windows.
inline void write_gaps_csv(std::ostream& os, const StudyData& study, const EffectSeries& e) {
    csv::write_row(os, {"period", "window", "treated", "synthetic", "gap"});
    for (std::size_t t = 0; t < study.num_pre(); ++t) {
        const auto i = static_cast<Eigen::Index>(t);
        csv::write_row(os, {study.periods_pre[t].str(), "pre", csv::format_double(study.treated_pre(i)),
                            csv::format_double(e.synthetic_pre(i)), csv::format_double(e.gaps_pre(i))});
    }
    for (std::size_t t = 0; t < study.num_post(); ++t) {
        const auto i = static_cast<Eigen::Index>(t);
        csv::write_row(os, {study.periods_post[t].str(), "post", csv::format_double(study.treated_post(i)),
                            csv::format_double(e.synthetic_post(i)), csv::format_double(e.gaps_post(i))});
    }
}

} // namespace scm
