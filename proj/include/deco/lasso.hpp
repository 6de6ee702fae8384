#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Eigenvalues>

#include "deco/error.hpp"
#include "deco/linalg.hpp"

namespace deco::lasso {

/// Lasso on a fixed design with objective
///
///     (1/n) ||y - X beta||^2 + 2 lambda ||beta||_1.
///
/// The factor 2 on lambda is part of the contract. Packages minimizing
/// (1/2n) ||y - X beta||^2 + alpha ||beta||_1 (glmnet, scikit-learn) report
/// alpha = lambda for the same solution, since dividing this objective by 2
/// gives theirs.
struct LassoProblem
{
    Eigen::Ref<const Matrix> X;
    Eigen::Ref<const Vector> y;
    double lambda = 0.0;
};

inline double soft_threshold(double z, double t)
{
    if (z > t) return z - t;
    if (z < -t) return z + t;
    return 0.0;
}

inline double objective(const Eigen::Ref<const Matrix>& X, const Eigen::Ref<const Vector>& y,
                        const Vector& beta, double lambda)
{
    const double n = static_cast<double>(X.rows());
    return (y - X * beta).squaredNorm() / n + 2.0 * lambda * beta.lpNorm<1>();
}

/// lambda_max = ||X^T y||_inf / n: the smallest lambda with an all-zero solution.
inline double lambda_max(const Eigen::Ref<const Matrix>& X, const Eigen::Ref<const Vector>& y)
{
    if (y.size() != X.rows()) throw Error(ErrorCode::dimension_mismatch, "|y| != rows(X)");
    const double inv_n = 1.0 / static_cast<double>(X.rows());
    double top = 0.0;
    for (Index j = 0; j < X.cols(); ++j) top = std::max(top, std::abs(X.col(j).dot(y) * inv_n));
    return top;
}

/// Geometric grid from lambda_max down to ratio * lambda_max.
inline Vector lambda_grid(const Eigen::Ref<const Matrix>& X, const Eigen::Ref<const Vector>& y,
                          int n_lambda = 100, double ratio = 1e-3)
{
    if (n_lambda < 2) throw Error(ErrorCode::invalid_spec, "n_lambda must be >= 2");
    if (!(ratio > 0.0 && ratio < 1.0)) throw Error(ErrorCode::invalid_spec, "ratio must lie in (0, 1)");
    const double top = lambda_max(X, y);
    if (!(top > 0.0)) throw Error(ErrorCode::degenerate_response, "X^T y = 0, lambda_max is 0");
    Vector grid(n_lambda);
    for (int k = 0; k < n_lambda; ++k) {
        grid(k) = top * std::pow(ratio, static_cast<double>(k) / (n_lambda - 1));
    }
    return grid;
}

struct KktReport
{
    double max_violation = 0.0;
    bool pass = true;
};

/// Checks the lasso optimality conditions at (beta, lambda):
/// |x_j^T r / n| <= lambda where beta_j = 0, and x_j^T r / n = lambda sign(beta_j)
/// where beta_j != 0, with r = y - X beta.
inline KktReport kkt_check(const Eigen::Ref<const Matrix>& X, const Eigen::Ref<const Vector>& y,
                           const Vector& beta, double lambda, double tol)
{
    if (y.size() != X.rows() || beta.size() != X.cols()) {
        throw Error(ErrorCode::dimension_mismatch, "kkt_check dimensions disagree");
    }
    const Vector grad = X.transpose() * (y - X * beta) / static_cast<double>(X.rows());
    KktReport rep;
    for (Index j = 0; j < beta.size(); ++j) {
        double v = 0.0;
        if (beta(j) > 0.0) {
            v = std::abs(grad(j) - lambda);
        } else if (beta(j) < 0.0) {
            v = std::abs(grad(j) + lambda);
        } else {
            v = std::max(0.0, std::abs(grad(j)) - lambda);
        }
        rep.max_violation = std::max(rep.max_violation, v);
    }
    rep.pass = rep.max_violation <= tol;
    return rep;
}

struct CdOptions
{
    double tol = 1e-9;           // max coordinate change relative to 1 + ||beta||_inf
    int max_sweeps = 10000;      // full plus active-set sweeps
    double kkt_target = 1e-7;    // extra full sweeps until the KKT residual is below this
    bool record_objective = false;
    int exact_every = 20;        // active sweeps between attempts at an exact solve on a stable signed support
};

struct CdFit
{
    Vector beta;
    int sweeps = 0;
    std::vector<double> objective_trace;  // one entry per sweep when requested
};

/// Cyclic coordinate descent with an active-set inner loop. A full sweep over
/// all coordinates decides convergence, so the returned point satisfies the
/// KKT conditions rather than just being stable on the active set.
inline CdFit cd_fit(const LassoProblem& problem, const std::optional<Vector>& warm_start = std::nullopt,
                    const CdOptions& opts = {})
{
    const auto& X = problem.X;
    const auto& y = problem.y;
    const double lambda = problem.lambda;
    const Index n = X.rows();
    const Index q = X.cols();
    if (y.size() != n) throw Error(ErrorCode::dimension_mismatch, "|y| != rows(X)");
    if (!(lambda >= 0.0)) throw Error(ErrorCode::invalid_spec, "lambda must be >= 0");

    const double inv_n = 1.0 / static_cast<double>(n);
    Vector diag(q);
    for (Index j = 0; j < q; ++j) diag(j) = X.col(j).squaredNorm() * inv_n;
    if (q > 0 && diag.maxCoeff() == 0.0) {
        throw Error(ErrorCode::invalid_spec, "all columns of X are zero");
    }

    CdFit fit;
    fit.beta = Vector::Zero(q);
    if (warm_start) {
        if (warm_start->size() != q) throw Error(ErrorCode::dimension_mismatch, "warm start size");
        fit.beta = *warm_start;
        for (Index j = 0; j < q; ++j) {
            if (diag(j) == 0.0) fit.beta(j) = 0.0;
        }
    }

    Vector r(n);
    std::vector<Index> active;
    auto refresh_residual = [&] {
        r = y;
        for (Index j = 0; j < q; ++j) {
            if (fit.beta(j) != 0.0) r.noalias() -= fit.beta(j) * X.col(j);
        }
    };
    auto update = [&](Index j) {
        const double d = diag(j);
        if (d == 0.0) return 0.0;
        const double old = fit.beta(j);
        const double z = X.col(j).dot(r) * inv_n + d * old;
        const double next = soft_threshold(z, lambda) / d;
        const double delta = next - old;
        if (delta != 0.0) {
            r.noalias() -= delta * X.col(j);
            fit.beta(j) = next;
        }
        return std::abs(delta);
    };
    auto record = [&] {
        if (opts.record_objective) {
            fit.objective_trace.push_back(r.squaredNorm() * inv_n + 2.0 * lambda * fit.beta.lpNorm<1>());
        }
    };
    auto tolerance = [&](double base) {
        return base * (1.0 + (q > 0 ? fit.beta.cwiseAbs().maxCoeff() : 0.0));
    };
    auto bump = [&] {
        if (++fit.sweeps > opts.max_sweeps) {
            throw Error(ErrorCode::max_iterations,
                        "coordinate descent exceeded " + std::to_string(opts.max_sweeps) + " sweeps");
        }
    };

    // Signed support: j + 1 for positive coefficients, -(j + 1) for negative ones.
    auto signed_support = [&] {
        std::vector<Index> key;
        for (Index j = 0; j < q; ++j) {
            if (fit.beta(j) > 0.0) key.push_back(j + 1);
            if (fit.beta(j) < 0.0) key.push_back(-(j + 1));
        }
        return key;
    };

    // Feature-sign step: minimize the smooth objective on the current signed support, stopping at the first
    // sign change and dropping that coordinate. Along a null direction of a singular support the step runs
    // to the first sign change. Returns true once the KKT conditions hold; never increases the objective.
    auto objective_now = [&] { return r.squaredNorm() * inv_n + 2.0 * lambda * fit.beta.lpNorm<1>(); };
    auto sign_step = [&](std::vector<Index> key) {
        const Vector saved = fit.beta;
        const double before = objective_now();
        while (!key.empty()) {
            const auto k = static_cast<Index>(key.size());
            Matrix xa(n, k);
            Vector rhs(k);
            Vector current(k);
            for (Index a = 0; a < k; ++a) {
                const Index s = key[static_cast<std::size_t>(a)];
                xa.col(a) = X.col(std::abs(s) - 1);
                rhs(a) = xa.col(a).dot(y) * inv_n - lambda * (s > 0 ? 1.0 : -1.0);
                current(a) = fit.beta(std::abs(s) - 1);
            }
            Matrix g = Matrix::Zero(k, k);
            g.selfadjointView<Eigen::Lower>().rankUpdate(xa.transpose(), inv_n);
            g.triangularView<Eigen::StrictlyUpper>() = g.transpose();

            Vector step;
            double t = 1.0;
            Eigen::LLT<Matrix> llt;
            if (k < n) llt.compute(g);
            if (k < n && llt.info() == Eigen::Success) {
                step = llt.solve(rhs) - current;
            } else {
                Eigen::SelfAdjointEigenSolver<Matrix> es(g);
                if (es.info() != Eigen::Success) break;
                const Vector c = es.eigenvectors().transpose() * (rhs - g * current);
                const double cutoff = 1e-10 * std::max(es.eigenvalues().maxCoeff(), 0.0);
                Vector range_part = Vector::Zero(k);
                Vector null_part = Vector::Zero(k);
                for (Index i = 0; i < k; ++i) {
                    if (es.eigenvalues()(i) > cutoff) {
                        range_part(i) = c(i) / es.eigenvalues()(i);
                    } else {
                        null_part(i) = c(i);
                    }
                }
                if (null_part.norm() > 1e-10 * c.norm()) {
                    step = es.eigenvectors() * null_part;
                    t = std::numeric_limits<double>::infinity();
                } else {
                    step = es.eigenvectors() * range_part;
                }
            }
            if (!step.allFinite()) break;

            Index crossing = -1;
            for (Index a = 0; a < k; ++a) {
                const bool positive = key[static_cast<std::size_t>(a)] > 0;
                if (positive ? step(a) < 0.0 : step(a) > 0.0) {
                    const double ta = -current(a) / step(a);
                    if (ta < t) {
                        t = ta;
                        crossing = a;
                    }
                }
            }
            if (!std::isfinite(t)) break;
            const Vector next = current + t * step;
            for (Index a = 0; a < k; ++a) fit.beta(std::abs(key[static_cast<std::size_t>(a)]) - 1) = next(a);
            if (crossing < 0) break;
            fit.beta(std::abs(key[static_cast<std::size_t>(crossing)]) - 1) = 0.0;
            key.erase(key.begin() + crossing);
        }
        refresh_residual();
        if (objective_now() > before) {
            fit.beta = saved;
            refresh_residual();
            return false;
        }
        record();
        return kkt_check(X, y, fit.beta, lambda, std::numeric_limits<double>::infinity()).max_violation <=
               opts.kkt_target;
    };

    std::vector<Index> tried;
    refresh_residual();
    double tol = opts.tol;
    for (;;) {
        // Full sweep.
        bump();
        refresh_residual();
        double max_change = 0.0;
        for (Index j = 0; j < q; ++j) max_change = std::max(max_change, update(j));
        record();
        if (max_change < tolerance(tol)) {
            if (kkt_check(X, y, fit.beta, lambda, std::numeric_limits<double>::infinity()).max_violation <=
                    opts.kkt_target ||
                tol < 1e-15) {
                break;
            }
            tol *= 0.1;
            continue;
        }

        active.clear();
        for (Index j = 0; j < q; ++j) {
            if (fit.beta(j) != 0.0) active.push_back(j);
        }
        std::vector<Index> key = signed_support();
        bool solved = false;
        for (int inner = 1;; ++inner) {
            bump();
            double change = 0.0;
            for (Index j : active) change = std::max(change, update(j));
            record();
            if (change < tolerance(tol)) break;
            if (inner % opts.exact_every == 0) {
                std::vector<Index> now = signed_support();
                if (now == key && now != tried) {
                    tried = now;
                    solved = sign_step(std::move(now));
                    break;
                }
                key = std::move(now);
            }
        }
        if (solved) break;
    }
    return fit;
}

struct LassoPath
{
    std::vector<double> lambdas;
    std::vector<Vector> betas;
    std::vector<Index> dfs;
    std::vector<double> rss;

    std::size_t size() const { return lambdas.size(); }
};

struct PathOptions
{
    CdOptions cd;
    // Early termination as glmnet does it: stop once the fraction of
    // ||y||^2 explained exceeds dev_ratio_max, or its gain between
    // consecutive lambdas falls below dev_change_min, or df reaches n.
    double dev_ratio_max = 0.999;
    double dev_change_min = 1e-5;
    bool stop_at_saturation = true;
};

inline Index count_nonzero(const Vector& v)
{
    return static_cast<Index>((v.array() != 0.0).count());
}

/// Warm-started path over a descending lambda grid.
inline LassoPath fit_path(const Eigen::Ref<const Matrix>& X, const Eigen::Ref<const Vector>& y,
                          const Vector& lambdas, const PathOptions& opts = {})
{
    LassoPath path;
    const double total = y.squaredNorm();
    const Index n = X.rows();
    std::optional<Vector> warm;
    double prev_ratio = 0.0;
    for (Index k = 0; k < lambdas.size(); ++k) {
        if (k > 0 && !(lambdas(k) < lambdas(k - 1))) {
            throw Error(ErrorCode::invalid_spec, "lambda grid must be strictly decreasing");
        }
        CdFit fit = cd_fit(LassoProblem{X, y, lambdas(k)}, warm, opts.cd);
        const double rss = (y - X * fit.beta).squaredNorm();
        const Index df = count_nonzero(fit.beta);
        path.lambdas.push_back(lambdas(k));
        path.dfs.push_back(df);
        path.rss.push_back(rss);
        path.betas.push_back(fit.beta);
        warm = std::move(fit.beta);

        const double ratio = total > 0.0 ? 1.0 - rss / total : 0.0;
        if (ratio >= opts.dev_ratio_max) break;
        if (k >= 5 && df > 0 && ratio - prev_ratio < opts.dev_change_min * ratio) break;
        if (opts.stop_at_saturation && df >= n) break;
        prev_ratio = ratio;
    }
    return path;
}

/// n ln(RSS/n) + df ln n + 2 gamma df ln p_total.
inline double ebic_score(double rss, Index df, Index n, Index p_total, double gamma)
{
    const double nn = static_cast<double>(n);
    const double safe_rss = std::max(rss, std::numeric_limits<double>::min());
    return nn * std::log(safe_rss / nn) + static_cast<double>(df) * std::log(nn) +
           2.0 * gamma * static_cast<double>(df) * std::log(static_cast<double>(p_total));
}

/// Index of the minimal-EBIC path point; ties go to the larger lambda.
/// p_total is the full problem dimension, also when the path was fitted on a
/// column subset, so scores are comparable across workers.
inline std::size_t ebic_select(const LassoPath& path, Index n, Index p_total, double gamma = 0.5)
{
    if (path.size() == 0) throw Error(ErrorCode::empty_path, "ebic_select on an empty path");
    std::size_t best = 0;
    double best_score = ebic_score(path.rss[0], path.dfs[0], n, p_total, gamma);
    for (std::size_t k = 1; k < path.size(); ++k) {
        const double s = ebic_score(path.rss[k], path.dfs[k], n, p_total, gamma);
        if (s < best_score) {
            best = k;
            best_score = s;
        }
    }
    return best;
}

} // namespace deco::lasso
