#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <string>
#include <vector>

#include <Eigen/Cholesky>
#include <Eigen/Core>

#include "deco/error.hpp"

namespace deco {

/// Dense real matrix, column-major. Columns are contiguous, which is what the
/// Gram products and the coordinate-descent sweeps stride over.
using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using Index = Eigen::Index;

namespace linalg {

template <class Derived>
void require_finite(const Eigen::DenseBase<Derived>& m, const std::string& what)
{
    if (!m.allFinite()) {
        throw Error(ErrorCode::non_finite, what + " contains NaN or Inf");
    }
}

struct CenterScaleResult
{
    Matrix x;
    Vector y0;
    Vector col_means;
    Vector col_scales;  // all ones when scaling was not requested
    double y_mean = 0.0;
};

namespace detail {

// Two-pass centering.
inline double center_in_place(Eigen::Ref<Vector> v)
{
    const double n = static_cast<double>(v.size());
    double mean = v.sum() / n;
    v.array() -= mean;
    double residue = v.sum() / n;
    v.array() -= residue;
    return mean + residue;
}

} // namespace detail

/// Centers every column of X and y to mean zero; with `scale`, also divides
/// each column by its sample standard deviation (n - 1 denominator).
inline CenterScaleResult center_scale(const Matrix& X, const Vector& y, bool scale)
{
    if (y.size() != X.rows()) {
        throw Error(ErrorCode::dimension_mismatch,
                    "y has " + std::to_string(y.size()) + " entries, X has " +
                        std::to_string(X.rows()) + " rows");
    }
    if (X.rows() < 2) {
        throw Error(ErrorCode::dimension_mismatch, "center_scale needs at least 2 rows");
    }
    require_finite(X, "X");
    require_finite(y, "y");
    const Index n = X.rows();
    const Index p = X.cols();

    CenterScaleResult out;
    out.x = X;
    out.y0 = y;
    out.col_means.resize(p);
    out.col_scales = Vector::Ones(p);

    for (Index j = 0; j < p; ++j) {
        auto col = out.x.col(j);
        const double magnitude = col.cwiseAbs().maxCoeff();
        out.col_means(j) = detail::center_in_place(col);
        if (!scale) continue;
        const double sd = std::sqrt(col.squaredNorm() / static_cast<double>(n - 1));
        if (!(sd > 1e-14 * magnitude) || sd == 0.0) {
            throw Error(ErrorCode::constant_column,
                        "column " + std::to_string(j) + " has zero variance");
        }
        col /= sd;
        out.col_scales(j) = sd;
    }
    out.y_mean = detail::center_in_place(out.y0);
    return out;
}

struct EigenDecomposition
{
    Vector values;   // descending
    Matrix vectors;  // orthonormal columns, vectors.col(i) pairs with values(i)
    int sweeps = 0;
};

inline double max_asymmetry(const Matrix& A)
{
    return (A - A.transpose()).cwiseAbs().maxCoeff();
}

/// Symmetric eigendecomposition by cyclic Jacobi rotations.
///
/// Converged when the off-diagonal Frobenius norm falls below 1e-12 times its
/// initial value; 100 sweeps without convergence raise NoConvergence.
inline EigenDecomposition sym_eig(const Matrix& A)
{
    if (A.rows() != A.cols()) {
        throw Error(ErrorCode::dimension_mismatch, "sym_eig requires a square matrix");
    }
    require_finite(A, "sym_eig input");
    const Index n = A.rows();
    EigenDecomposition out;
    if (n == 0) return out;

    const double scale = A.cwiseAbs().maxCoeff();
    if (max_asymmetry(A) > 1e-10 * scale) {
        throw Error(ErrorCode::not_symmetric, "relative asymmetry exceeds 1e-10");
    }

    Matrix a = 0.5 * (A + A.transpose());
    Matrix v = Matrix::Identity(n, n);

    auto off_norm = [&] {
        double s = 0.0;
        for (Index q = 1; q < n; ++q) {
            s += a.col(q).head(q).squaredNorm();
        }
        return std::sqrt(2.0 * s);
    };

    constexpr int max_sweeps = 100;
    const double off0 = off_norm();
    const double target = 1e-12 * off0;
    double off = off0;
    int sweep = 0;
    for (; sweep < max_sweeps && off > target && off > 0.0; ++sweep) {
        for (Index p = 0; p < n - 1; ++p) {
            for (Index q = p + 1; q < n; ++q) {
                const double apq = a(p, q);
                if (apq == 0.0) continue;
                const double app = a(p, p);
                const double aqq = a(q, q);
                // Entries below the diagonals' resolution are dropped outright.
                const double g = 100.0 * std::abs(apq);
                if (sweep > 3 && std::abs(app) + g == std::abs(app) &&
                    std::abs(aqq) + g == std::abs(aqq)) {
                    a(p, q) = a(q, p) = 0.0;
                    continue;
                }
                const double theta = (aqq - app) / (2.0 * apq);
                const double t = (theta >= 0.0 ? 1.0 : -1.0) /
                                 (std::abs(theta) + std::sqrt(theta * theta + 1.0));
                const double c = 1.0 / std::sqrt(t * t + 1.0);
                const double s = t * c;

                double* cp = a.col(p).data();
                double* cq = a.col(q).data();
                for (Index k = 0; k < n; ++k) {
                    const double akp = cp[k];
                    const double akq = cq[k];
                    cp[k] = c * akp - s * akq;
                    cq[k] = s * akp + c * akq;
                }
                cp[p] = app - t * apq;
                cq[q] = aqq + t * apq;
                cp[q] = 0.0;
                cq[p] = 0.0;
                for (Index k = 0; k < n; ++k) {
                    a(p, k) = cp[k];
                    a(q, k) = cq[k];
                }

                double* vp = v.col(p).data();
                double* vq = v.col(q).data();
                for (Index k = 0; k < n; ++k) {
                    const double vkp = vp[k];
                    const double vkq = vq[k];
                    vp[k] = c * vkp - s * vkq;
                    vq[k] = s * vkp + c * vkq;
                }
            }
        }
        off = off_norm();
    }
    if (off > target && off > 0.0) {
        throw Error(ErrorCode::no_convergence,
                    "Jacobi did not converge in " + std::to_string(max_sweeps) + " sweeps");
    }

    std::vector<Index> order(static_cast<std::size_t>(n));
    std::iota(order.begin(), order.end(), Index{0});
    std::stable_sort(order.begin(), order.end(),
                     [&](Index i, Index j) { return a(i, i) > a(j, j); });
    out.values.resize(n);
    out.vectors.resize(n, n);
    for (Index i = 0; i < n; ++i) {
        out.values(i) = a(order[static_cast<std::size_t>(i)], order[static_cast<std::size_t>(i)]);
        out.vectors.col(i) = v.col(order[static_cast<std::size_t>(i)]);
    }
    out.sweeps = sweep;
    return out;
}

struct InverseRootOptions
{
    /// Moore-Penrose form: directions with eigenvalue below
    /// `pinv_tolerance * lambda_max` map to zero instead of raising
    /// SingularWithoutRidge.
    bool pseudo_inverse = false;
    double pinv_tolerance = 1e-10;
};

/// Per-eigenvalue weights sqrt(p) * (lambda + r1)^(-1/2) shared by the
/// symmetric (gram_inv_sqrt) and row (svd_rows) transforms.
inline Vector inverse_root_weights(const EigenDecomposition& eig, double r1, double p,
                                   const InverseRootOptions& opts = {})
{
    if (r1 < 0.0) throw Error(ErrorCode::invalid_spec, "r1 must be >= 0");
    const Index n = eig.values.size();
    Vector w(n);
    if (n == 0) return w;
    const double lmax = std::max(eig.values(0), 0.0);
    const double lmin = eig.values(n - 1);
    if (lmin < -1e-8 * std::max(lmax, 1.0)) {
        throw Error(ErrorCode::not_positive_semidefinite,
                    "smallest eigenvalue " + std::to_string(lmin));
    }
    if (lmax == 0.0 && r1 == 0.0 && !opts.pseudo_inverse) {
        throw Error(ErrorCode::singular_without_ridge, "zero matrix with r1 = 0");
    }
    if (r1 == 0.0 && !opts.pseudo_inverse && !(lmin > 1e-12 * lmax)) {
        throw Error(ErrorCode::singular_without_ridge,
                    "numerically rank-deficient Gram matrix with r1 = 0");
    }
    const double root_p = std::sqrt(p);
    for (Index i = 0; i < n; ++i) {
        double lambda = eig.values(i);
        if (lambda < 1e-14 * lmax) lambda = 0.0;
        if (opts.pseudo_inverse && r1 == 0.0 && !(lambda > opts.pinv_tolerance * lmax)) {
            w(i) = 0.0;
        } else {
            w(i) = root_p / std::sqrt(lambda + r1);
        }
    }
    return w;
}

/// sqrt(p) * V diag(w) V^T from a precomputed decomposition.
inline Matrix inv_sqrt_from_eig(const EigenDecomposition& eig, double r1, double p,
                                const InverseRootOptions& opts = {})
{
    Vector w = inverse_root_weights(eig, r1, p, opts);
    Matrix scaled = eig.vectors * w.asDiagonal();
    Matrix out = scaled * eig.vectors.transpose();
    return 0.5 * (out + out.transpose());
}

/// Returns sqrt(p) * (F + r1 I)^(-1/2) for symmetric PSD F.
inline Matrix spd_inv_sqrt(const Matrix& F, double r1, double p,
                           const InverseRootOptions& opts = {})
{
    return inv_sqrt_from_eig(sym_eig(F), r1, p, opts);
}

/// Solves (X^T X + r2 I) beta = X^T y by Cholesky.
inline Vector ridge_solve(const Matrix& X, const Vector& y, double r2)
{
    if (y.size() != X.rows()) {
        throw Error(ErrorCode::dimension_mismatch, "ridge_solve: |y| != rows(X)");
    }
    if (!(r2 > 0.0)) throw Error(ErrorCode::invalid_spec, "ridge_solve requires r2 > 0");
    Matrix gram = Matrix::Zero(X.cols(), X.cols());
    gram.selfadjointView<Eigen::Lower>().rankUpdate(X.transpose());
    gram.diagonal().array() += r2;
    Eigen::LLT<Matrix> llt(gram);
    if (llt.info() != Eigen::Success) {
        throw Error(ErrorCode::no_convergence, "Cholesky factorization failed");
    }
    return llt.solve(X.transpose() * y);
}

} // namespace linalg
} // namespace deco
