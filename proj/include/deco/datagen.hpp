#pragma once

#include <cmath>
#include <cstdint>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include "deco/error.hpp"
#include "deco/format.hpp"
#include "deco/linalg.hpp"
#include "deco/rng.hpp"

namespace deco {

enum class ModelKind { independent, compound_symmetry, group, factor, l1_ball };

inline std::string to_string(ModelKind k)
{
    switch (k) {
        case ModelKind::independent: return "independent";
        case ModelKind::compound_symmetry: return "compound_symmetry";
        case ModelKind::group: return "group";
        case ModelKind::factor: return "factor";
        case ModelKind::l1_ball: return "l1_ball";
    }
    return "?";
}

inline ModelKind parse_model_kind(const std::string& s)
{
    if (s == "independent" || s == "i" || s == "1") return ModelKind::independent;
    if (s == "compound_symmetry" || s == "ii" || s == "2") return ModelKind::compound_symmetry;
    if (s == "group" || s == "iii" || s == "3") return ModelKind::group;
    if (s == "factor" || s == "iv" || s == "4") return ModelKind::factor;
    if (s == "l1_ball" || s == "v" || s == "5") return ModelKind::l1_ball;
    throw Error(ErrorCode::invalid_spec, "unknown model kind '" + s + "'");
}

struct ModelSpec
{
    ModelKind kind = ModelKind::independent;
    Index n = 100;
    Index p = 1000;
    double rho = 0.6;
    Index n_factors = 5;
    double group_noise_sd = 0.1;
    double target_r2 = 0.9;
    std::uint64_t seed = 1;

    void validate() const
    {
        auto fail = [](const std::string& m) { throw Error(ErrorCode::invalid_spec, m); };
        if (n < 2) fail("n must be >= 2");
        if (p < 1) fail("p must be >= 1");
        if (kind == ModelKind::group && p < 15) fail("group model needs p >= 15");
        if ((kind == ModelKind::independent || kind == ModelKind::compound_symmetry ||
             kind == ModelKind::factor) && p < 5) {
            fail("sparse models place 5 true variables and need p >= 5");
        }
        if (!(rho >= 0.0 && rho < 1.0)) fail("rho must lie in [0, 1)");
        if (!(target_r2 > 0.0 && target_r2 < 1.0)) fail("target_r2 must lie in (0, 1)");
        if (n_factors < 1) fail("n_factors must be >= 1");
        if (!(group_noise_sd >= 0.0)) fail("group_noise_sd must be >= 0");
    }
};

struct Dataset
{
    Matrix X;
    Vector y;
    std::optional<Vector> beta_true;
    double sigma = 0.0;
    std::optional<std::vector<Index>> support;

    Index n() const { return X.rows(); }
    Index p() const { return X.cols(); }
};

inline double sample_variance(const Vector& v)
{
    const double mean = v.mean();
    return (v.array() - mean).square().sum() / static_cast<double>(v.size() - 1);
}

/// Noise sd giving var(X beta) / (var(X beta) + sigma^2) = target_r2.
inline double calibrate_noise(const Vector& xbeta, double target_r2)
{
    if (!(target_r2 > 0.0 && target_r2 < 1.0)) {
        throw Error(ErrorCode::invalid_spec, "target_r2 must lie in (0, 1)");
    }
    if (xbeta.size() < 2) throw Error(ErrorCode::degenerate_signal, "need at least 2 samples");
    const double v = sample_variance(xbeta);
    if (!(v > 0.0)) throw Error(ErrorCode::degenerate_signal, "var(X beta) = 0");
    return std::sqrt(v * (1.0 - target_r2) / target_r2);
}

namespace detail {

inline Vector normals(std::uint64_t seed, rng::Stage stage, std::uint64_t index, Index count)
{
    rng::Stream s(seed, stage, index);
    Vector v(count);
    for (Index i = 0; i < count; ++i) v(i) = s.normal();
    return v;
}

// Rows are drawn from `row_seed`; population-level parameters (factor
// loadings) always come from the spec seed so a held-out draw shares them.
inline Matrix make_design(const ModelSpec& spec, std::uint64_t row_seed, Index rows)
{
    using rng::Stage;
    const Index p = spec.p;
    Matrix X(rows, p);
    switch (spec.kind) {
        case ModelKind::independent:
            for (Index j = 0; j < p; ++j) {
                X.col(j) = normals(row_seed, Stage::design_column, static_cast<std::uint64_t>(j), rows);
            }
            break;
        case ModelKind::compound_symmetry:
        case ModelKind::l1_ball: {
            const Vector z0 = normals(row_seed, Stage::latent, 0, rows);
            const double a = std::sqrt(spec.rho);
            const double b = std::sqrt(1.0 - spec.rho);
            for (Index j = 0; j < p; ++j) {
                X.col(j) = a * z0 +
                           b * normals(row_seed, Stage::design_column, static_cast<std::uint64_t>(j), rows);
            }
            break;
        }
        case ModelKind::group: {
            std::vector<Vector> z;
            for (std::uint64_t g = 0; g < 3; ++g) z.push_back(normals(row_seed, Stage::latent, g, rows));
            for (Index j = 0; j < p; ++j) {
                Vector e = normals(row_seed, Stage::design_column, static_cast<std::uint64_t>(j), rows);
                if (j < 15) {
                    X.col(j) = z[static_cast<std::size_t>(j % 3)] + spec.group_noise_sd * e;
                } else {
                    X.col(j) = e;
                }
            }
            break;
        }
        case ModelKind::factor: {
            const Index k = spec.n_factors;
            Matrix scores(rows, k);
            for (Index f = 0; f < k; ++f) {
                scores.col(f) = normals(row_seed, Stage::latent, static_cast<std::uint64_t>(f), rows);
            }
            for (Index j = 0; j < p; ++j) {
                const Vector loading = normals(spec.seed, Stage::loading, static_cast<std::uint64_t>(j), k);
                X.col(j) = scores * loading +
                           normals(row_seed, Stage::design_column, static_cast<std::uint64_t>(j), rows);
            }
            break;
        }
    }
    return X;
}

inline Vector make_coefficients(const ModelSpec& spec)
{
    using rng::Stage;
    const Index p = spec.p;
    Vector beta = Vector::Zero(p);
    switch (spec.kind) {
        case ModelKind::independent:
        case ModelKind::compound_symmetry:
        case ModelKind::factor: {
            const double floor = 5.0 * std::sqrt(std::log(static_cast<double>(p)) /
                                                 static_cast<double>(spec.n));
            for (Index j = 0; j < 5; ++j) {
                rng::Stream s(spec.seed, Stage::coefficient, static_cast<std::uint64_t>(j));
                const double sign = s.bernoulli_half() ? -1.0 : 1.0;
                beta(j) = sign * (std::abs(s.normal()) + floor);
            }
            break;
        }
        case ModelKind::group:
            beta.head(15).setConstant(3.0);
            break;
        case ModelKind::l1_ball: {
            const double shape = 1.0 / static_cast<double>(p);
            Vector logs(p);
            for (Index j = 0; j < p; ++j) {
                rng::Stream s(spec.seed, Stage::dirichlet, static_cast<std::uint64_t>(j));
                logs(j) = s.log_gamma(shape);
            }
            const double top = logs.maxCoeff();
            Vector w = (logs.array() - top).exp();
            beta = 10.0 * w / w.sum();
            break;
        }
    }
    return beta;
}

} // namespace detail

/// Draws one synthetic dataset. Identical specs give bitwise-identical output.
inline Dataset generate(const ModelSpec& spec)
{
    spec.validate();
    Dataset d;
    d.X = detail::make_design(spec, spec.seed, spec.n);
    Vector beta = detail::make_coefficients(spec);
    const Vector signal = d.X * beta;
    d.sigma = calibrate_noise(signal, spec.target_r2);
    d.y = signal + d.sigma * detail::normals(spec.seed, rng::Stage::noise, 0, spec.n);
    if (spec.kind != ModelKind::l1_ball) {
        std::vector<Index> support;
        for (Index j = 0; j < beta.size(); ++j) {
            if (beta(j) != 0.0) support.push_back(j);
        }
        d.support = std::move(support);
    }
    d.beta_true = std::move(beta);
    return d;
}

/// Fresh rows from the same population (same beta, sigma and loadings).
inline Dataset generate_holdout(const ModelSpec& spec, const Dataset& train, Index rows)
{
    if (!train.beta_true) throw Error(ErrorCode::invalid_spec, "holdout needs beta_true");
    const std::uint64_t row_seed = rng::mix_seed(spec.seed, static_cast<std::uint64_t>(rng::Stage::holdout));
    Dataset d;
    d.X = detail::make_design(spec, row_seed, rows);
    d.y = d.X * *train.beta_true +
          train.sigma * detail::normals(row_seed, rng::Stage::noise, 0, rows);
    d.beta_true = train.beta_true;
    d.sigma = train.sigma;
    d.support = train.support;
    return d;
}

/// Writes `y,x1,...,xp` then one sample per line, shortest round-trip decimals.
inline void export_csv(const Dataset& d, const std::string& path)
{
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error(ErrorCode::io, "cannot open '" + path + "' for writing");
    out << "y";
    for (Index j = 0; j < d.p(); ++j) out << ",x" << (j + 1);
    out << '\n';
    std::string line;
    for (Index i = 0; i < d.n(); ++i) {
        line = format_double(d.y(i));
        for (Index j = 0; j < d.p(); ++j) {
            line += ',';
            line += format_double(d.X(i, j));
        }
        line += '\n';
        out << line;
    }
    if (!out) throw Error(ErrorCode::io, "write failed for '" + path + "'");
}

} // namespace deco
