#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>

#include "deco/error.hpp"
#include "deco/linalg.hpp"
#include "deco/rng.hpp"

namespace deco::eval {

struct Metrics
{
    double mse = 0.0;  // ||beta_hat - beta_true||_2^2
    Index fp = 0;      // selected, true coefficient zero
    Index fn = 0;      // not selected, true coefficient nonzero
    bool sign_consistent = false;
    std::optional<double> pred_mse;  // held-out mean squared prediction error
};

/// A coefficient counts as selected iff it is exactly nonzero; soft
/// thresholding produces exact zeros.
inline Metrics compute_metrics(const Vector& beta_hat, const Vector& beta_true)
{
    if (beta_hat.size() != beta_true.size()) {
        throw Error(ErrorCode::dimension_mismatch, "compute_metrics: vectors differ in length");
    }
    Metrics m;
    m.mse = (beta_hat - beta_true).squaredNorm();
    bool signs_match = true;
    for (Index j = 0; j < beta_hat.size(); ++j) {
        const bool sel = beta_hat(j) != 0.0;
        const bool truth = beta_true(j) != 0.0;
        if (sel && !truth) ++m.fp;
        if (!sel && truth) ++m.fn;
        if (sel && truth && ((beta_hat(j) > 0.0) != (beta_true(j) > 0.0))) signs_match = false;
    }
    m.sign_consistent = m.fp == 0 && m.fn == 0 && signs_match;
    return m;
}

inline double prediction_mse(const Matrix& X, const Vector& y, const Vector& beta, double intercept)
{
    return ((X * beta).array() + intercept - y.array()).square().mean();
}

struct DiagnosticsReport
{
    double min_diag = 0.0;     // min_i x_i^T x_i / n
    double max_diag = 0.0;     // max_i x_i^T x_i / n
    double max_offdiag = 0.0;  // max_{i != j} |x_i^T x_j| / n
    std::optional<double> noise_corr;  // ||X^T W / n||_inf
    Index n = 0;
    Index p = 0;
    bool sampled = false;
    Index pairs_examined = 0;
};

struct DiagnosticsOptions
{
    /// 0 = exact over all pairs; otherwise examine this many seeded random pairs.
    Index sample_pairs = 0;
    std::uint64_t seed = 1;
    Index block = 256;
};

/// Empirical design quantities: the diagonal range and the largest
/// off-diagonal entry of X^T X / n, plus ||X^T W / n||_inf when W is given.
inline DiagnosticsReport design_diagnostics(const Matrix& X, const std::optional<Vector>& w = std::nullopt,
                                            const DiagnosticsOptions& opts = {})
{
    const Index n = X.rows();
    const Index p = X.cols();
    if (p < 2) throw Error(ErrorCode::dimension_mismatch, "design_diagnostics needs >= 2 columns");
    const double inv_n = 1.0 / static_cast<double>(n);

    DiagnosticsReport rep;
    rep.n = n;
    rep.p = p;
    const Vector diag = X.colwise().squaredNorm().transpose() * inv_n;
    rep.min_diag = diag.minCoeff();
    rep.max_diag = diag.maxCoeff();

    if (opts.sample_pairs > 0) {
        rep.sampled = true;
        rng::Stream s(opts.seed, rng::Stage::sampling, 0);
        const auto up = static_cast<std::uint64_t>(p);
        for (Index k = 0; k < opts.sample_pairs; ++k) {
            const auto i = static_cast<Index>(s.below(up));
            auto j = static_cast<Index>(s.below(up - 1));
            if (j >= i) ++j;
            rep.max_offdiag = std::max(rep.max_offdiag, std::abs(X.col(i).dot(X.col(j))) * inv_n);
        }
        rep.pairs_examined = opts.sample_pairs;
    } else {
        const Index b = std::max<Index>(1, opts.block);
        for (Index start = 0; start < p; start += b) {
            const Index width = std::min(b, p - start);
            const Matrix g = X.middleCols(start, width).transpose() * X.rightCols(p - start);
            for (Index c = 0; c < g.cols(); ++c) {
                for (Index r = 0; r < width; ++r) {
                    if (r >= c) continue;  // strictly upper triangle of the full Gram
                    rep.max_offdiag = std::max(rep.max_offdiag, std::abs(g(r, c)));
                }
            }
        }
        rep.max_offdiag *= inv_n;
        rep.pairs_examined = p * (p - 1) / 2;
    }

    if (w) {
        if (w->size() != n) throw Error(ErrorCode::dimension_mismatch, "W length differs from rows");
        rep.noise_corr = (X.transpose() * *w).cwiseAbs().maxCoeff() * inv_n;
    }
    return rep;
}

} // namespace deco::eval
