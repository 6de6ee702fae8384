#include <gtest/gtest.h>

#include <algorithm>
#include <numeric>
#include <random>

#include "deco/datagen.hpp"
#include "deco/deco.hpp"
#include "deco/eval.hpp"
#include "test_util.hpp"

using namespace deco;
using namespace deco::eval;
using testutil::gaussian;

namespace {

Dataset make(ModelKind kind, Index n, Index p, std::uint64_t seed)
{
    ModelSpec s;
    s.kind = kind;
    s.n = n;
    s.p = p;
    s.seed = seed;
    return generate(s);
}

// Decorrelated standardized design in original column order.
Matrix decorrelated_design(const Dataset& d, const DecoConfig& cfg)
{
    Stage1 s1 = run_stage1(d, cfg);
    Matrix out(d.n(), d.p());
    for (std::size_t g = 0; g < s1.partition.m(); ++g) {
        const auto& grp = s1.partition.groups[g];
        for (std::size_t k = 0; k < grp.size(); ++k) out.col(grp[k]) = s1.blocks_tilde[g].col(static_cast<Index>(k));
    }
    return out;
}

// Exhaustive reference for the off-diagonal maximum.
double brute_offdiag(const Matrix& X)
{
    const Matrix g = X.transpose() * X / static_cast<double>(X.rows());
    double best = 0.0;
    for (Index i = 0; i < g.rows(); ++i) {
        for (Index j = 0; j < g.cols(); ++j) {
            if (i != j) best = std::max(best, std::abs(g(i, j)));
        }
    }
    return best;
}

} // namespace

TEST(Metrics, ExactEstimate)
{
    Vector b(4);
    b << 1.0, 0.0, -2.0, 0.0;
    Metrics m = compute_metrics(b, b);
    EXPECT_EQ(m.mse, 0.0);
    EXPECT_EQ(m.fp, 0);
    EXPECT_EQ(m.fn, 0);
    EXPECT_TRUE(m.sign_consistent);
    EXPECT_FALSE(m.pred_mse.has_value());
}

TEST(Metrics, ZeroEstimate)
{
    Vector truth = Vector::Zero(10);
    truth.head(5).setConstant(3.0);
    Metrics m = compute_metrics(Vector::Zero(10), truth);
    EXPECT_EQ(m.fn, 5);
    EXPECT_EQ(m.fp, 0);
    EXPECT_DOUBLE_EQ(m.mse, 45.0);
    EXPECT_FALSE(m.sign_consistent);
}

TEST(Metrics, HandCase)
{
    Vector truth(2);
    truth << 1.0, 0.0;
    Vector est(2);
    est << 2.0, -1.0;
    Metrics m = compute_metrics(est, truth);
    EXPECT_DOUBLE_EQ(m.mse, 2.0);
    EXPECT_EQ(m.fp, 1);
    EXPECT_EQ(m.fn, 0);
    EXPECT_FALSE(m.sign_consistent);
}

TEST(Metrics, WrongSignBreaksConsistency)
{
    Vector truth(3);
    truth << 1.0, -1.0, 0.0;
    Vector est(3);
    est << 0.5, 0.5, 0.0;
    Metrics m = compute_metrics(est, truth);
    EXPECT_EQ(m.fp, 0);
    EXPECT_EQ(m.fn, 0);
    EXPECT_FALSE(m.sign_consistent);
    est(1) = -0.1;
    EXPECT_TRUE(compute_metrics(est, truth).sign_consistent);
}

TEST(Metrics, LengthMismatch)
{
    try {
        compute_metrics(Vector::Zero(3), Vector::Zero(4));
        ADD_FAILURE();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::dimension_mismatch);
    }
}

TEST(Metrics, PermutationEquivariant)
{
    std::mt19937_64 gen(5);
    std::uniform_int_distribution<int> pick(-2, 2);
    for (int trial = 0; trial < 50; ++trial) {
        Vector truth(12);
        Vector est(12);
        for (Index j = 0; j < 12; ++j) {
            truth(j) = pick(gen);
            est(j) = pick(gen) * 0.5;
        }
        std::vector<Index> perm(12);
        std::iota(perm.begin(), perm.end(), Index{0});
        std::shuffle(perm.begin(), perm.end(), gen);
        Metrics a = compute_metrics(est, truth);
        Metrics b = compute_metrics(est(perm), truth(perm));
        EXPECT_DOUBLE_EQ(a.mse, b.mse);
        EXPECT_EQ(a.fp, b.fp);
        EXPECT_EQ(a.fn, b.fn);
        EXPECT_EQ(a.sign_consistent, b.sign_consistent);
    }
}

TEST(Metrics, PredictionMse)
{
    Matrix X(2, 1);
    X << 1.0, 2.0;
    Vector y(2);
    y << 3.0, 3.0;
    Vector b(1);
    b << 1.0;
    EXPECT_DOUBLE_EQ(prediction_mse(X, y, b, 1.0), 0.5);
}

TEST(Diagnostics, OrthonormalColumns)
{
    const Index n = 50;
    Matrix X = std::sqrt(static_cast<double>(n)) * testutil::orthonormal_columns(n, 20, 3);
    DiagnosticsReport r = design_diagnostics(X);
    EXPECT_NEAR(r.min_diag, 1.0, 1e-12);
    EXPECT_NEAR(r.max_diag, 1.0, 1e-12);
    EXPECT_LT(r.max_offdiag, 1e-12);
    EXPECT_EQ(r.pairs_examined, 190);
    EXPECT_FALSE(r.sampled);
}

TEST(Diagnostics, ExactMatchesBruteForceAcrossBlockSizes)
{
    Matrix X = gaussian(30, 70, 4);
    const double ref = brute_offdiag(X);
    for (Index block : {1, 7, 64, 256}) {
        DiagnosticsOptions opts;
        opts.block = block;
        EXPECT_NEAR(design_diagnostics(X, std::nullopt, opts).max_offdiag, ref, 1e-12) << block;
    }
}

TEST(Diagnostics, SampledModeIsALowerBound)
{
    Matrix X = gaussian(30, 200, 5);
    DiagnosticsOptions opts;
    opts.sample_pairs = 500;
    opts.seed = 9;
    DiagnosticsReport r = design_diagnostics(X, std::nullopt, opts);
    EXPECT_TRUE(r.sampled);
    EXPECT_EQ(r.pairs_examined, 500);
    EXPECT_LE(r.max_offdiag, brute_offdiag(X) + 1e-15);
    EXPECT_GT(r.max_offdiag, 0.0);
    EXPECT_EQ(r.max_offdiag, design_diagnostics(X, std::nullopt, opts).max_offdiag);
}

TEST(Diagnostics, NoiseCorrelation)
{
    Matrix X = gaussian(40, 10, 6);
    Vector w = testutil::gaussian_vector(40, 7);
    DiagnosticsReport r = design_diagnostics(X, w);
    ASSERT_TRUE(r.noise_corr.has_value());
    EXPECT_NEAR(*r.noise_corr, (X.transpose() * w).cwiseAbs().maxCoeff() / 40.0, 1e-14);
    try {
        design_diagnostics(X, Vector::Zero(3));
        ADD_FAILURE();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::dimension_mismatch);
    }
}

TEST(Diagnostics, DecorrelationCollapsesCompoundSymmetry)
{
    const Index n = 200;
    const Index p = 1000;
    Dataset d = make(ModelKind::compound_symmetry, n, p, 11);
    auto cs = linalg::center_scale(d.X, d.y, true);
    const double raw = design_diagnostics(cs.x).max_offdiag;
    DecoConfig cfg;
    cfg.m = 10;
    const double dec = design_diagnostics(decorrelated_design(d, cfg)).max_offdiag;
    EXPECT_GT(raw, 0.5);
    EXPECT_LE(dec, 5.0 * std::sqrt(std::log(static_cast<double>(p)) / n));
    EXPECT_LT(dec, raw / 2.0);
}

TEST(Diagnostics, IndependentDesignNotInflated)
{
    Dataset d = make(ModelKind::independent, 100, 1000, 12);
    auto cs = linalg::center_scale(d.X, d.y, true);
    DecoConfig cfg;
    cfg.m = 10;
    const double raw = design_diagnostics(cs.x).max_offdiag;
    const double dec = design_diagnostics(decorrelated_design(d, cfg)).max_offdiag;
    EXPECT_LE(dec, 2.0 * raw);
}

TEST(Diagnostics, WhitenedDesignLessCorrelatedForCorrelatedModels)
{
    for (ModelKind kind : {ModelKind::compound_symmetry, ModelKind::group, ModelKind::factor}) {
        Dataset d = make(kind, 60, 300, 13);
        const Matrix fbar = linalg::spd_inv_sqrt(d.X * d.X.transpose(), 0.0, 300.0);
        const double raw = design_diagnostics(d.X).max_offdiag;
        const double white = design_diagnostics(fbar * d.X).max_offdiag;
        EXPECT_LT(white, raw) << to_string(kind);
    }
}
