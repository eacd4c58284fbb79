#pragma once

// Test-only helpers: study builders, random instance generators and the
// brute-force simplex oracle. Nothing here calls into the solver.

#include <Eigen/Dense>

#include <cmath>
#include <limits>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "scm/study.hpp"

namespace scm::test {

inline std::vector<Period> months(Period first, std::size_t n) {
    std::vector<Period> out;
    for (std::size_t i = 0; i < n; ++i) out.push_back(first.plus(static_cast<long>(i)));
    return out;
}

/// Study from explicit series. `donors` rows are full paths (pre then post).
inline StudyData make_study(const Eigen::VectorXd& treated, const Eigen::MatrixXd& donors, Eigen::Index n_pre,
                            std::vector<std::string> labels = {}) {
    StudyData s;
    s.treated = "treated";
    const Eigen::Index n_post = treated.size() - n_pre;
    s.treated_pre = treated.head(n_pre);
    s.treated_post = treated.tail(n_post);
    s.donors_pre = donors.leftCols(n_pre);
    s.donors_post = donors.rightCols(n_post);
    if (labels.empty())
        for (Eigen::Index j = 0; j < donors.rows(); ++j) labels.push_back("d" + std::to_string(j + 1));
    s.donor_labels = std::move(labels);
    s.periods_pre = months(Period(2020, 1), static_cast<std::size_t>(n_pre));
    s.periods_post = months(Period(2020, 1).plus(n_pre), static_cast<std::size_t>(n_post));
    return s;
}

/// Independent donor paths with values uniform in [lo, hi]; the treated path is
/// drawn the same way.
inline StudyData random_study(std::mt19937_64& rng, Eigen::Index J, Eigen::Index t_pre, Eigen::Index t_post,
                              double lo = 5e4, double hi = 2e6) {
    std::uniform_real_distribution<double> u(lo, hi);
    Eigen::VectorXd treated(t_pre + t_post);
    Eigen::MatrixXd donors(J, t_pre + t_post);
    for (auto& v : treated) v = u(rng);
    for (Eigen::Index j = 0; j < J; ++j)
        for (Eigen::Index t = 0; t < t_pre + t_post; ++t) donors(j, t) = u(rng);
    return make_study(treated, donors, t_pre);
}

/// Price-like paths: a shared trend plus unit-specific level and noise. The
/// treated unit is a random convex mix of donors plus noise, so fits are good
/// but not exact, which exercises interior optima.
inline StudyData trending_study(std::mt19937_64& rng, Eigen::Index J, Eigen::Index t_pre, Eigen::Index t_post,
                                double noise = 0.01) {
    std::uniform_real_distribution<double> level(2e5, 1.5e6), slope(-0.004, 0.012), unit(0, 1);
    std::normal_distribution<double> eps(0, 1);
    const Eigen::Index T = t_pre + t_post;
    Eigen::MatrixXd donors(J, T);
    for (Eigen::Index j = 0; j < J; ++j) {
        const double base = level(rng), g = slope(rng);
        double v = base;
        for (Eigen::Index t = 0; t < T; ++t) {
            v *= 1 + g + 0.004 * eps(rng);
            donors(j, t) = v;
        }
    }
    Eigen::VectorXd mix(J);
    for (auto& m : mix) m = -std::log(unit(rng) + 1e-12);
    mix /= mix.sum();
    Eigen::VectorXd treated = donors.transpose() * mix;
    for (auto& v : treated) v *= 1 + noise * eps(rng);
    return make_study(treated, donors, t_pre);
}

inline Eigen::VectorXd oracle_omega(Eigen::Index t_pre, double alpha) {
    Eigen::VectorXd w(t_pre);
    for (Eigen::Index t = 0; t < t_pre; ++t) w(t) = std::exp(alpha * static_cast<double>(t - (t_pre - 1)));
    return w;
}

inline double oracle_objective(const StudyData& s, const Eigen::VectorXd& omega, const std::vector<double>& w) {
    double total = 0;
    for (Eigen::Index t = 0; t < s.treated_pre.size(); ++t) {
        double synth = 0;
        for (std::size_t j = 0; j < w.size(); ++j) synth += w[j] * s.donors_pre(static_cast<Eigen::Index>(j), t);
        const double r = s.treated_pre(t) - synth;
        total += omega(t) * r * r;
    }
    return total;
}

struct GridOptimum {
    double objective = std::numeric_limits<double>::infinity();
    std::vector<double> weights;
};

/// Exhaustive search over the simplex lattice with spacing 1/steps (J <= 3).
inline GridOptimum grid_search(const StudyData& s, const Eigen::VectorXd& omega, int steps = 1000) {
    const auto J = s.num_donors();
    GridOptimum best;
    auto consider = [&](std::vector<double> w) {
        const double f = oracle_objective(s, omega, w);
        if (f < best.objective) best = {f, std::move(w)};
    };
    const double h = 1.0 / steps;
    if (J == 1) {
        consider({1.0});
    } else if (J == 2) {
        for (int i = 0; i <= steps; ++i) consider({i * h, 1.0 - i * h});
    } else if (J == 3) {
        for (int i = 0; i <= steps; ++i)
            for (int k = 0; k <= steps - i; ++k) consider({i * h, k * h, (steps - i - k) * h});
    }
    return best;
}

/// Grid search followed by successively finer local lattices around the best
/// point (spacing shrinks tenfold per level). Still brute force, still J <= 3.
inline GridOptimum refined_grid_search(const StudyData& s, const Eigen::VectorXd& omega, int steps = 1000,
                                       int levels = 7) {
    GridOptimum best = grid_search(s, omega, steps);
    const auto J = s.num_donors();
    if (J < 2) return best;
    double h = 1.0 / steps;
    for (int level = 0; level < levels; ++level) {
        const double fine = h / 10;
        const GridOptimum centre = best;
        auto consider = [&](std::vector<double> w) {
            for (double x : w)
                if (x < 0) return;
            const double f = oracle_objective(s, omega, w);
            if (f < best.objective) best = {f, std::move(w)};
        };
        for (int a = -20; a <= 20; ++a) {
            const double w0 = centre.weights[0] + a * fine;
            if (J == 2) {
                consider({w0, 1.0 - w0});
                continue;
            }
            for (int b = -20; b <= 20; ++b) {
                const double w1 = centre.weights[1] + b * fine;
                consider({w0, w1, 1.0 - w0 - w1});
            }
        }
        h = fine;
    }
    return best;
}

} // namespace scm::test
