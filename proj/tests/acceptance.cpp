// Acceptance run: prints one PASS/FAIL line per criterion and exits nonzero
// if any criterion fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "deco/datagen.hpp"
#include "deco/deco.hpp"
#include "deco/experiment.hpp"
#include "deco/lasso.hpp"
#include "deco/linalg.hpp"

using namespace deco;
using experiment::ExperimentConfig;
using experiment::ExperimentResult;
using experiment::Method;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

Matrix gaussian(Index rows, Index cols, std::mt19937_64& gen)
{
    std::normal_distribution<double> dist;
    Matrix m(rows, cols);
    for (Index j = 0; j < cols; ++j) {
        for (Index i = 0; i < rows; ++i) m(i, j) = dist(gen);
    }
    return m;
}

int failures = 0;

void report(int id, bool ok, double secs, double budget, const std::string& detail)
{
    const bool in_time = secs < budget;
    const bool pass = ok && in_time;
    if (!pass) ++failures;
    std::printf("%s criterion %d: %s; %.2f s (budget %.0f s%s)\n", pass ? "PASS" : "FAIL", id, detail.c_str(), secs,
                budget, in_time ? "" : ", exceeded");
    std::fflush(stdout);
}

std::string fmt(const char* f, double a)
{
    char buf[128];
    std::snprintf(buf, sizeof buf, f, a);
    return buf;
}

const experiment::Aggregate& find(const ExperimentResult& r, const std::string& method, Index m)
{
    for (const auto& a : r.aggregates) {
        if (a.method == method && a.m == m) return a;
    }
    throw Error(ErrorCode::invalid_config, "no aggregate for " + method);
}

ExperimentConfig desk_config(ModelKind kind, Index n, Index p, int reps, std::vector<Method> methods,
                             std::vector<Index> ms, std::uint64_t seed)
{
    ExperimentConfig c;
    ModelSpec s;
    s.kind = kind;
    s.n = n;
    s.p = p;
    c.model = s;
    c.methods = std::move(methods);
    c.replications = reps;
    c.m_values = std::move(ms);
    c.seed = seed;
    return c;
}

struct Timed
{
    ExperimentResult result;
    double secs = 0.0;
};

Timed run(const ExperimentConfig& c, std::size_t threads = 1)
{
    const auto t0 = Clock::now();
    Timed t{experiment::run_experiment(c, threads), 0.0};
    t.secs = seconds_since(t0);
    return t;
}

std::string failed_note(const ExperimentResult& r)
{
    return r.failed_rows ? ", " + std::to_string(r.failed_rows) + " failed runs" : "";
}

} // namespace

int main()
{
    // 1. Whitening identity.
    {
        const auto t0 = Clock::now();
        std::mt19937_64 gen(101);
        double worst = 0.0;
        int count = 0;
        for (Index n : {10, 50}) {
            for (Index factor : {2, 10}) {
                for (int k = 0; k < 5; ++k) {
                    const Index p = factor * n;
                    Matrix X = gaussian(n, p, gen);
                    Matrix fbar = linalg::spd_inv_sqrt(X * X.transpose(), 0.0, static_cast<double>(p));
                    Matrix w = fbar * X * X.transpose() * fbar / static_cast<double>(p);
                    worst = std::max(worst, (w - Matrix::Identity(n, n)).cwiseAbs().maxCoeff());
                    ++count;
                }
            }
        }
        report(1, count == 20 && worst <= 1e-7, seconds_since(t0), 5,
               fmt("max |F X X^T F / p - I| = %.3g over 20 designs (tol 1e-7)", worst));
    }

    // 2. Orthogonalization when p <= n.
    {
        const auto t0 = Clock::now();
        std::mt19937_64 gen(202);
        Matrix X = gaussian(100, 30, gen);
        linalg::InverseRootOptions opts;
        opts.pseudo_inverse = true;
        Matrix fbar = linalg::spd_inv_sqrt(X * X.transpose(), 0.0, 30.0, opts);
        Matrix xt = fbar * X;
        Matrix g = xt.transpose() * xt;
        g.diagonal().setZero();
        const double worst = g.cwiseAbs().maxCoeff();
        report(2, worst <= 1e-7, seconds_since(t0), 1,
               fmt("max distinct-column inner product %.3g (tol 1e-7)", worst));
    }

    // 3. KKT suite.
    {
        const auto t0 = Clock::now();
        std::mt19937_64 gen(303);
        std::uniform_int_distribution<Index> pick_n(10, 100);
        std::uniform_int_distribution<Index> pick_q(1, 200);
        std::uniform_int_distribution<int> pick_k(0, 99);
        double worst = 0.0;
        int passed = 0;
        for (int t = 0; t < 200; ++t) {
            const Index n = pick_n(gen);
            const Index q = pick_q(gen);
            Matrix X = gaussian(n, q, gen);
            Vector beta = Vector::Zero(q);
            for (Index j = 0; j < std::min<Index>(q, 5); ++j) beta(j) = 2.0 - j;
            Vector y = X * beta + gaussian(n, 1, gen).col(0);
            const double lambda = lasso::lambda_grid(X, y)(pick_k(gen));
            auto fit = lasso::cd_fit(lasso::LassoProblem{X, y, lambda});
            auto kkt = lasso::kkt_check(X, y, fit.beta, lambda, 1e-6);
            worst = std::max(worst, kkt.max_violation);
            passed += kkt.pass ? 1 : 0;
        }
        report(3, passed == 200, seconds_since(t0), 30,
               std::to_string(passed) + "/200 pass at 1e-6, worst violation " + fmt("%.3g", worst));
    }

    // 4. Soft-threshold oracle on orthonormal designs.
    {
        const auto t0 = Clock::now();
        std::mt19937_64 gen(404);
        std::uniform_int_distribution<Index> pick_q(1, 60);
        std::uniform_real_distribution<double> pick_frac(0.0, 1.0);
        double worst = 0.0;
        for (int t = 0; t < 50; ++t) {
            const Index n = 80;
            const Index q = pick_q(gen);
            Eigen::HouseholderQR<Matrix> qr(gaussian(n, q, gen));
            Matrix X = std::sqrt(static_cast<double>(n)) * (qr.householderQ() * Matrix::Identity(n, q));
            Vector y = X.leftCols(std::min<Index>(q, 3)) * Vector::Constant(std::min<Index>(q, 3), 1.5) +
                       gaussian(n, 1, gen).col(0);
            const Vector z = X.transpose() * y / static_cast<double>(n);
            const double lambda = pick_frac(gen) * z.cwiseAbs().maxCoeff();
            auto fit = lasso::cd_fit(lasso::LassoProblem{X, y, lambda});
            for (Index j = 0; j < q; ++j) {
                worst = std::max(worst, std::abs(fit.beta(j) - lasso::soft_threshold(z(j), lambda)));
            }
        }
        report(4, worst <= 1e-8, seconds_since(t0), 5,
               fmt("max coordinate gap to soft thresholding %.3g over 50 designs (tol 1e-8)", worst));
    }

    // 5. Gram partition invariance.
    {
        const auto t0 = Clock::now();
        std::mt19937_64 gen(505);
        Matrix X = gaussian(50, 500, gen);
        Matrix ref;
        double worst = 0.0;
        for (Index m : {1, 2, 5, 10, 37}) {
            std::vector<Matrix> blocks;
            for (const auto& g : partition_columns(500, m, 55).groups) blocks.push_back(X(Eigen::all, g));
            Matrix F = accumulate_gram(blocks);
            if (m == 1) {
                ref = F;
            } else {
                worst = std::max(worst, (F - ref).norm() / ref.norm());
            }
        }
        report(5, worst <= 1e-10, seconds_since(t0), 2,
               fmt("max relative difference across m in {1,2,5,10,37}: %.3g (tol 1e-10)", worst));
    }

    // 6. Stability across m.
    const ExperimentConfig c6 =
        desk_config(ModelKind::compound_symmetry, 100, 1000, 20, {Method::deco2}, {1, 5, 20}, 6);
    Timed r6 = run(c6);
    {
        const double a = find(r6.result, "deco2", 1).mse;
        const double b = find(r6.result, "deco2", 5).mse;
        const double c = find(r6.result, "deco2", 20).mse;
        const double lo = std::min({a, b, c});
        const double hi = std::max({a, b, c});
        const double spread = (hi - lo) / lo;
        char buf[256];
        std::snprintf(buf, sizeof buf, "DECO-2 mean MSE m=1 %.3f, m=5 %.3f, m=20 %.3f; (max-min)/min = %.1f%% (need < 20%%)%s",
                      a, b, c, 100.0 * spread, failed_note(r6.result).c_str());
        report(6, spread < 0.2 && r6.result.failed_rows == 0, r6.secs, 600, buf);
    }

    // 7 and 8. Naive partition and full-data comparison on one design.
    const ExperimentConfig c78 = desk_config(
        ModelKind::compound_symmetry, 100, 1000, 20,
        {Method::deco2, Method::deco3, Method::lasso_full, Method::lasso_refine, Method::lasso_naive}, {10}, 7);
    Timed r78 = run(c78);
    {
        const double deco2 = find(r78.result, "deco2", 10).mse;
        const double naive = find(r78.result, "lasso_naive", 10).mse;
        char buf[256];
        std::snprintf(buf, sizeof buf, "lasso-naive mean MSE %.3f vs DECO-2 %.3f, ratio %.2f (need >= 10)%s", naive,
                      deco2, naive / deco2, failed_note(r78.result).c_str());
        report(7, naive >= 10.0 * deco2 && r78.result.failed_rows == 0, r78.secs, 600, buf);

        const double deco3 = find(r78.result, "deco3", 10).mse;
        const double full = find(r78.result, "lasso_full", 1).mse;
        const double refine = find(r78.result, "lasso_refine", 1).mse;
        const bool a = deco2 <= 3.0 * full;
        const bool b = deco3 <= 1.5 * refine;
        std::snprintf(buf, sizeof buf,
                      "DECO-2 %.3f vs 3 x lasso-full %.3f [%s]; DECO-3 %.3f vs 1.5 x lasso-refine %.3f [%s]", deco2,
                      3.0 * full, a ? "ok" : "miss", deco3, 1.5 * refine, b ? "ok" : "miss");
        report(8, a && b && r78.result.failed_rows == 0, r78.secs, 600, buf);
    }

    // 9. Sign consistency.
    const ExperimentConfig c9 =
        desk_config(ModelKind::independent, 200, 500, 50, {Method::deco3, Method::lasso_full}, {5}, 9);
    Timed r9 = run(c9);
    {
        const double deco3 = find(r9.result, "deco3", 5).sign_consistent;
        const double full = find(r9.result, "lasso_full", 1).sign_consistent;
        char buf[256];
        std::snprintf(buf, sizeof buf,
                      "DECO-3 exact sign recovery in %.0f%% of 50 reps (need >= 80%%; lasso-full reaches %.0f%%)%s",
                      100.0 * deco3, 100.0 * full, failed_note(r9.result).c_str());
        report(9, deco3 >= 0.8 && r9.result.failed_rows == 0, r9.secs, 600, buf);
    }

    // 10. Error decreases with n.
    {
        const auto t0 = Clock::now();
        std::vector<double> mse;
        int failed = 0;
        for (Index n : {100, 200, 400}) {
            auto r = experiment::run_experiment(
                desk_config(ModelKind::independent, n, 1000, 20, {Method::deco2}, {10}, 10));
            mse.push_back(find(r, "deco2", 10).mse);
            failed += r.failed_rows;
        }
        const bool monotone = mse[0] > mse[1] && mse[1] > mse[2];
        const double ratio = mse[0] / mse[2];
        char buf[256];
        std::snprintf(buf, sizeof buf, "DECO-2 mean MSE n=100 %.3f, n=200 %.3f, n=400 %.3f; ratio %.2f (need >= 2)", mse[0],
                      mse[1], mse[2], ratio);
        report(10, monotone && ratio >= 2.0 && failed == 0, seconds_since(t0), 900, buf);
    }

    // 11. Decorrelated noise correlation against lambda_n / 2.
    {
        const auto t0 = Clock::now();
        const Index n = 200;
        const Index p = 1000;
        int within = 0;
        double worst_ratio = 0.0;
        for (int r = 0; r < 100; ++r) {
            ModelSpec s;
            s.kind = ModelKind::compound_symmetry;
            s.n = n;
            s.p = p;
            s.seed = 1100 + static_cast<std::uint64_t>(r);
            Dataset d = generate(s);
            DecoConfig cfg;
            Stage1 s1 = run_stage1(d, cfg);
            Vector eps = d.y - d.X * *d.beta_true;
            eps.array() -= eps.mean();
            const Vector eps_t = *s1.transform * eps;
            const double corr = (s1.blocks_tilde[0].transpose() * eps_t).cwiseAbs().maxCoeff() / static_cast<double>(n);
            const double sigma0 = std::sqrt(sample_variance(d.y));
            const double lambda = 2.0 * sigma0 * std::sqrt(std::log(static_cast<double>(p)) / static_cast<double>(n));
            within += corr <= lambda / 2.0 ? 1 : 0;
            worst_ratio = std::max(worst_ratio, corr / (lambda / 2.0));
        }
        char buf[256];
        std::snprintf(buf, sizeof buf, "||X~^T e~ / n||_inf <= lambda_n / 2 in %d/100 draws (need >= 95), worst ratio %.3f",
                      within, worst_ratio);
        report(11, within >= 95, seconds_since(t0), 300, buf);
    }

    // 12. Thread-count determinism of the metric tables for runs 6 to 9.
    {
        const auto t0 = Clock::now();
        int same = 0;
        const std::vector<std::pair<const ExperimentConfig*, const ExperimentResult*>> runs{
            {&c6, &r6.result}, {&c78, &r78.result}, {&c9, &r9.result}};
        for (const auto& [cfg, one] : runs) {
            const ExperimentResult eight = experiment::run_experiment(*cfg, 8);
            same += experiment::strip_timing_columns(experiment::results_csv(*one)) ==
                            experiment::strip_timing_columns(experiment::results_csv(eight))
                        ? 1
                        : 0;
        }
        report(12, same == 3, seconds_since(t0), 1800,
               std::to_string(same) + "/3 metric tables identical between 1 and 8 threads");
    }

    std::printf("%d criteria failed\n", failures);
    return failures == 0 ? 0 : 1;
}
