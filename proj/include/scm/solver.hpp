#pragma once

// Donor weights minimizing the time-weighted pre-treatment squared error
//
//     min_w  sum_t omega_t (y_t - sum_j w_j x_jt)^2   s.t. w >= 0, sum_j w_j = 1
//
// solved by projected gradient with a fixed 1/L step, started from uniform
// weights. Price paths are highly collinear, so plain projected gradient
// identifies the support long before it pins the weights; every
// `polish_interval` iterations a primal active-set pass solves the problem
// exactly on the current support. Its result is kept only if it lowers the
// objective, and the solve ends once the optimality conditions hold. The problem is convex, so the
// objective value at the optimum is unique even when the weights are not.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>
#include <span>
#include <vector>

#include "scm/error.hpp"
#include "scm/study.hpp"

namespace scm {

/// Per-period loss weights omega_t = exp(alpha * offset_t), offset_t <= 0.
struct TimeWeights {
    Eigen::VectorXd omega;
    double alpha = 0;
};

[[nodiscard]] inline TimeWeights time_weights(std::span<const int> offsets, double alpha) {
    if (!(alpha >= 0) || !std::isfinite(alpha)) throw ParameterError("decay rate alpha must be >= 0");
    TimeWeights tw;
    tw.alpha = alpha;
    tw.omega.resize(static_cast<Eigen::Index>(offsets.size()));
    for (std::size_t i = 0; i < offsets.size(); ++i) {
        if (offsets[i] > 0) throw ParameterError("time offsets must be <= 0");
        if (i > 0 && offsets[i] <= offsets[i - 1]) throw ParameterError("time offsets must be strictly increasing");
        tw.omega(static_cast<Eigen::Index>(i)) = std::exp(alpha * static_cast<double>(offsets[i]));
    }
    return tw;
}

[[nodiscard]] inline TimeWeights time_weights(const StudyData& study, double alpha) {
    const auto offsets = pre_period_index(study);
    return time_weights(offsets, alpha);
}

struct SolverOptions {
    /// Stop once an iteration lowers the objective by less than this fraction.
    double tolerance = 1e-12;
    int max_iterations = 100'000;
    /// Projected-gradient iterations between active-set polishing attempts (0 disables).
    int polish_interval = 200;
    /// Keep the objective after every iteration (diagnostics and tests).
    bool record_trace = false;
};

struct FitResult {
    Eigen::VectorXd weights;        // aligned with StudyData::donor_labels
    Eigen::VectorXd synthetic_pre;  // sum_j w_j * donors_pre(j, t)
    double objective = 0;           // weighted SSE in outcome units squared
    int iterations = 0;             // projected-gradient iterations
    int polish_steps = 0;           // accepted active-set steps
    bool converged = false;
    std::vector<double> trace;      // scaled objective per iterate, starting at w0
};

/// Euclidean projection onto the probability simplex (sort-based).
[[nodiscard]] inline Eigen::VectorXd project_simplex(const Eigen::VectorXd& v) {
    const auto n = v.size();
    if (n == 0) throw ParameterError("cannot project an empty vector onto the simplex");
    std::vector<double> u(v.data(), v.data() + n);
    std::sort(u.begin(), u.end(), std::greater<>());
    double cumsum = 0, theta = 0;
    for (Eigen::Index k = 0; k < n; ++k) {
        cumsum += u[static_cast<std::size_t>(k)];
        const double t = (cumsum - 1.0) / static_cast<double>(k + 1);
        if (u[static_cast<std::size_t>(k)] - t > 0) theta = t;
    }
    return (v.array() - theta).max(0.0).matrix();
}

namespace detail {

// Clamps round-off negatives and makes the components sum to exactly 1.0 when
// accumulated in index order.
inline void finalize_simplex(Eigen::VectorXd& w) {
    for (auto& x : w) {
        if (!(x > 1e-12)) x = 0;  // also maps NaN to 0
    }
    double s = w.sum();
    if (!(s > 0)) {
        w.setConstant(1.0 / static_cast<double>(w.size()));
        s = w.sum();
    }
    w /= s;
    Eigen::Index big = 0;
    w.maxCoeff(&big);
    for (int pass = 0; pass < 8; ++pass) {
        const double total = std::accumulate(w.begin(), w.end(), 0.0);
        if (total == 1.0) break;
        w(big) += 1.0 - total;
    }
}

inline double weighted_sse(const Eigen::VectorXd& residual, const Eigen::VectorXd& omega) {
    return (omega.array() * residual.array().square()).sum();
}

// Scaled problem data: X is donor x period, y and sqrt_omega are per period.
struct ScaledProblem {
    const Eigen::MatrixXd& X;
    const Eigen::VectorXd& y;
    const Eigen::VectorXd& omega;
    Eigen::VectorXd sqrt_omega;

    [[nodiscard]] Eigen::VectorXd residual(const Eigen::VectorXd& w) const { return y - X.transpose() * w; }
    [[nodiscard]] double value(const Eigen::VectorXd& w) const { return weighted_sse(residual(w), omega); }
    [[nodiscard]] Eigen::VectorXd gradient(const Eigen::VectorXd& w) const {
        return -2.0 * (X * (omega.array() * residual(w).array()).matrix());
    }
};

// Minimizer of the loss over {w : w_j = 0 off `support`, sum w = 1}, ignoring
// the sign constraints. The sum constraint is eliminated by pivoting on one
// support member, leaving a weighted least-squares problem that is solved by
// complete orthogonal decomposition (minimum-norm when donors are collinear).
inline Eigen::VectorXd solve_on_support(const ScaledProblem& prob, const std::vector<Eigen::Index>& support,
                                        Eigen::Index pivot) {
    Eigen::VectorXd w = Eigen::VectorXd::Zero(prob.X.rows());
    if (support.size() == 1) {
        w(support.front()) = 1.0;
        return w;
    }
    const auto T = prob.y.size();
    const auto k = static_cast<Eigen::Index>(support.size()) - 1;
    const Eigen::VectorXd xp = prob.X.row(pivot).transpose();
    Eigen::MatrixXd M(T, k);
    Eigen::Index col = 0;
    for (auto j : support) {
        if (j == pivot) continue;
        M.col(col++) = (prob.X.row(j).transpose() - xp).cwiseProduct(prob.sqrt_omega);
    }
    const Eigen::VectorXd b = (prob.y - xp).cwiseProduct(prob.sqrt_omega);
    const Eigen::VectorXd v = M.completeOrthogonalDecomposition().solve(b);
    col = 0;
    double rest = 0;
    for (auto j : support) {
        if (j == pivot) continue;
        w(j) = v(col++);
        rest += w(j);
    }
    w(pivot) = 1.0 - rest;
    return w;
}

struct PolishResult {
    Eigen::VectorXd w;
    double value = 0;
    int steps = 0;
    bool optimal = false;
};

// Primal active-set method started from a feasible point. Each step moves
// toward the support minimizer, stopping at the first weight that hits zero;
// donors whose gradient undercuts the support multiplier are added back.
inline PolishResult active_set_polish(const ScaledProblem& prob, Eigen::VectorXd w, double gradient_scale,
                                      std::vector<double>* trace) {
    const auto J = w.size();
    PolishResult res;
    double f = prob.value(w);
    const double add_tol = 1e-10 * gradient_scale;
    const int max_steps = static_cast<int>(10 * J + 20);
    std::vector<bool> active(static_cast<std::size_t>(J));
    for (Eigen::Index j = 0; j < J; ++j) active[static_cast<std::size_t>(j)] = w(j) > 0;

    for (int step = 0; step < max_steps; ++step) {
        std::vector<Eigen::Index> support;
        Eigen::Index pivot = -1;
        for (Eigen::Index j = 0; j < J; ++j) {
            if (!active[static_cast<std::size_t>(j)]) continue;
            support.push_back(j);
            if (pivot < 0 || w(j) > w(pivot)) pivot = j;
        }
        const Eigen::VectorXd target = solve_on_support(prob, support, pivot);
        const Eigen::VectorXd d = target - w;

        double tau = 1.0;
        Eigen::Index blocking = -1;
        for (auto j : support) {
            if (d(j) < 0 && w(j) + d(j) < 0) {
                const double t = w(j) / -d(j);
                if (t < tau) {
                    tau = t;
                    blocking = j;
                }
            }
        }
        Eigen::VectorXd w_next = w + tau * d;
        if (blocking >= 0) {
            w_next(blocking) = 0;
            active[static_cast<std::size_t>(blocking)] = false;
        }
        for (Eigen::Index j = 0; j < J; ++j)
            if (w_next(j) < 0) w_next(j) = 0;
        w_next /= w_next.sum();
        const double f_next = prob.value(w_next);
        if (f_next <= f) {
            w = std::move(w_next);
            f = f_next;
            if (trace) trace->push_back(f);
            ++res.steps;
        }
        if (blocking >= 0) continue;

        // At the support minimizer: look for a donor that should enter.
        const Eigen::VectorXd g = prob.gradient(w);
        double level = std::numeric_limits<double>::infinity();
        for (auto j : support) level = std::min(level, g(j));
        Eigen::Index enter = -1;
        for (Eigen::Index j = 0; j < J; ++j) {
            if (active[static_cast<std::size_t>(j)]) continue;
            if (g(j) < level - add_tol && (enter < 0 || g(j) < g(enter))) enter = j;
        }
        if (enter < 0) {
            res.optimal = true;
            break;
        }
        active[static_cast<std::size_t>(enter)] = true;
    }
    res.w = std::move(w);
    res.value = f;
    return res;
}

} // namespace detail

[[nodiscard]] inline double objective(const StudyData& study, const TimeWeights& tw, const Eigen::VectorXd& w) {
    const Eigen::VectorXd r = study.treated_pre - study.donors_pre.transpose() * w;
    return detail::weighted_sse(r, tw.omega);
}

/// Gradient of the weighted SSE with respect to the donor weights.
[[nodiscard]] inline Eigen::VectorXd objective_gradient(const StudyData& study, const TimeWeights& tw,
                                                        const Eigen::VectorXd& w) {
    const Eigen::VectorXd r = study.treated_pre - study.donors_pre.transpose() * w;
    return -2.0 * (study.donors_pre * (tw.omega.array() * r.array()).matrix());
}

[[nodiscard]] inline FitResult fit(const StudyData& study, const TimeWeights& tw, const SolverOptions& opts = {}) {
    const auto J = static_cast<Eigen::Index>(study.num_donors());
    const auto T = static_cast<Eigen::Index>(study.num_pre());
    if (J == 0) throw ParameterError("study has no donors");
    if (tw.omega.size() != T)
        throw ParameterError("time weights have " + std::to_string(tw.omega.size()) + " entries for " +
                             std::to_string(T) + " pre-treatment periods");
    if (opts.max_iterations < 0 || !(opts.tolerance >= 0)) throw ParameterError("invalid solver options");

    // Divide everything by the treated unit's mean pre-treatment level so the
    // quadratic is O(1) when levels are O(1e6).
    double scale = study.treated_pre.mean();
    if (!(scale > 0) || !std::isfinite(scale)) {
        scale = std::max(study.treated_pre.cwiseAbs().maxCoeff(), study.donors_pre.cwiseAbs().maxCoeff());
        if (!(scale > 0) || !std::isfinite(scale)) scale = 1.0;
    }
    const Eigen::MatrixXd X = study.donors_pre / scale;
    const Eigen::VectorXd y = study.treated_pre / scale;
    const Eigen::VectorXd& omega = tw.omega;

    const Eigen::MatrixXd Q = X * omega.asDiagonal() * X.transpose();
    const double lipschitz = 2.0 * Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(Q, Eigen::EigenvaluesOnly)
                                       .eigenvalues()
                                       .maxCoeff();

    FitResult res;
    Eigen::VectorXd w = Eigen::VectorXd::Constant(J, 1.0 / static_cast<double>(J));
    Eigen::VectorXd r = y - X.transpose() * w;
    double f = detail::weighted_sse(r, omega);
    if (opts.record_trace) res.trace.push_back(f);

    detail::ScaledProblem prob{X, y, omega, omega.cwiseSqrt()};
    const double gradient_scale = prob.gradient(Eigen::VectorXd::Zero(J)).cwiseAbs().maxCoeff();
    auto try_polish = [&] {
        auto pol = detail::active_set_polish(prob, w, gradient_scale, opts.record_trace ? &res.trace : nullptr);
        if (pol.value <= f) {
            w = std::move(pol.w);
            f = pol.value;
            r = prob.residual(w);
            res.polish_steps += pol.steps;
        }
        return pol.optimal;
    };

    if (!(lipschitz > 0) || !std::isfinite(lipschitz) || f == 0) {
        // Every donor path is zero (any w is optimal) or uniform is already exact.
        res.converged = true;
    } else {
        const double step = 1.0 / lipschitz;
        for (int it = 0; it < opts.max_iterations; ++it) {
            if (opts.polish_interval > 0 && it > 0 && it % opts.polish_interval == 0 && try_polish()) {
                res.converged = true;
                break;
            }
            const Eigen::VectorXd grad = -2.0 * (X * (omega.array() * r.array()).matrix());
            Eigen::VectorXd w_next = project_simplex(w - step * grad);
            Eigen::VectorXd r_next = y - X.transpose() * w_next;
            const double f_next = detail::weighted_sse(r_next, omega);
            if (!(f_next <= f)) {
                // Round-off floor: the exact step cannot increase the objective.
                res.converged = true;
                break;
            }
            const double decrease = f - f_next;
            w = std::move(w_next);
            r = std::move(r_next);
            const double f_prev = f;
            f = f_next;
            res.iterations = it + 1;
            if (opts.record_trace) res.trace.push_back(f);
            if (f == 0 || decrease <= opts.tolerance * f_prev) {
                res.converged = true;
                break;
            }
        }
        if (opts.polish_interval > 0 && f > 0 && try_polish()) res.converged = true;
    }

    detail::finalize_simplex(w);
    res.weights = std::move(w);
    res.synthetic_pre = study.donors_pre.transpose() * res.weights;
    res.objective = detail::weighted_sse(study.treated_pre - res.synthetic_pre, omega);
    return res;
}

/// First-order optimality check for the simplex-constrained problem: every
/// donor carrying weight must sit at the minimum gradient component, and none
/// may fall below it. Tolerance is relative to the gradient magnitude at the
/// origin, ||2 X diag(omega) y||_inf.
struct KktReport {
    bool satisfied = false;
    double max_violation = 0;  // relative
    double gradient_scale = 0;
};

[[nodiscard]] inline KktReport kkt_check(const StudyData& study, const TimeWeights& tw, const Eigen::VectorXd& w,
                                         double tolerance = 1e-6) {
    const Eigen::VectorXd g = objective_gradient(study, tw, w);
    const Eigen::VectorXd g0 = objective_gradient(study, tw, Eigen::VectorXd::Zero(w.size()));
    KktReport rep;
    rep.gradient_scale = g0.cwiseAbs().maxCoeff();
    const double denom = rep.gradient_scale > 0 ? rep.gradient_scale : 1.0;
    const double gmin = g.minCoeff();
    // The active-set minimum: donors with weight define the multiplier.
    double level = std::numeric_limits<double>::infinity();
    for (Eigen::Index j = 0; j < w.size(); ++j)
        if (w(j) > 0) level = std::min(level, g(j));
    for (Eigen::Index j = 0; j < w.size(); ++j) {
        if (w(j) > 0) rep.max_violation = std::max(rep.max_violation, std::abs(g(j) - gmin) / denom);
        rep.max_violation = std::max(rep.max_violation, (level - g(j)) / denom);
    }
    rep.satisfied = rep.max_violation <= tolerance;
    return rep;
}

} // namespace scm
