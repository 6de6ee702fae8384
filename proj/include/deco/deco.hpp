#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <istream>
#include <numeric>
#include <optional>
#include <ostream>
#include <span>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "deco/datagen.hpp"
#include "deco/error.hpp"
#include "deco/lasso.hpp"
#include "deco/linalg.hpp"
#include "deco/parallel.hpp"
#include "deco/rng.hpp"

namespace deco {

// ---------------------------------------------------------------------------
// Configuration and result types

enum class LambdaRule { ebic, theoretical, fixed };

/// gram_inv_sqrt: sqrt(p) (F + r1 I)^(-1/2), symmetric.
/// svd_rows:      sqrt(p) (Lambda + r1 I)^(-1/2) U^T from the same eigenpairs.
/// identity:      no decorrelation (the naive partition baseline).
enum class DecorrelationMode { gram_inv_sqrt, svd_rows, identity };

inline std::string to_string(LambdaRule r)
{
    switch (r) {
        case LambdaRule::ebic: return "ebic";
        case LambdaRule::theoretical: return "theoretical";
        case LambdaRule::fixed: return "fixed";
    }
    return "?";
}

inline LambdaRule parse_lambda_rule(const std::string& s)
{
    if (s == "ebic") return LambdaRule::ebic;
    if (s == "theoretical") return LambdaRule::theoretical;
    if (s == "fixed") return LambdaRule::fixed;
    throw Error(ErrorCode::invalid_config, "unknown lambda rule '" + s + "'");
}

inline std::string to_string(DecorrelationMode m)
{
    switch (m) {
        case DecorrelationMode::gram_inv_sqrt: return "gram_inv_sqrt";
        case DecorrelationMode::svd_rows: return "svd_rows";
        case DecorrelationMode::identity: return "identity";
    }
    return "?";
}

inline DecorrelationMode parse_decorrelation_mode(const std::string& s)
{
    if (s == "gram_inv_sqrt") return DecorrelationMode::gram_inv_sqrt;
    if (s == "svd_rows") return DecorrelationMode::svd_rows;
    if (s == "identity") return DecorrelationMode::identity;
    throw Error(ErrorCode::invalid_config, "unknown decorrelation mode '" + s + "'");
}

struct DecoConfig
{
    Index m = 1;
    /// Unset means 1 with refinement (DECO-3) and 10 without (DECO-2).
    std::optional<double> r1;
    /// Empty means 10 log-spaced values in [1e-4, 1e2] * n.
    std::vector<double> r2_grid;
    int cv_folds = 5;
    LambdaRule lambda_rule = LambdaRule::ebic;
    double ebic_gamma = 0.5;
    double theory_a = 2.0;      // lambda = A sigma0 sqrt(log p / n)
    double fixed_lambda = 0.0;  // shared lambda for LambdaRule::fixed
    bool refine = false;
    bool scale_columns = true;
    std::uint64_t seed = 1;
    DecorrelationMode mode = DecorrelationMode::gram_inv_sqrt;
    bool pseudo_inverse = false;
    int n_lambda = 100;
    double lambda_ratio = 1e-3;
    /// Execution only; never changes results.
    std::size_t threads = 1;

    double r1_value() const { return r1 ? *r1 : (refine ? 1.0 : 10.0); }

    void validate(Index p) const
    {
        if (m < 1 || m > p) {
            throw Error(ErrorCode::invalid_m, "m = " + std::to_string(m) + " outside [1, " + std::to_string(p) + "]");
        }
        if (r1_value() < 0.0) throw Error(ErrorCode::invalid_config, "r1 must be >= 0");
        if (cv_folds < 2) throw Error(ErrorCode::invalid_config, "cv_folds must be >= 2");
        for (double r2 : r2_grid) {
            if (!(r2 > 0.0)) throw Error(ErrorCode::invalid_config, "r2 grid values must be > 0");
        }
        if (n_lambda < 2) throw Error(ErrorCode::invalid_config, "n_lambda must be >= 2");
        if (!(lambda_ratio > 0.0 && lambda_ratio < 1.0)) {
            throw Error(ErrorCode::invalid_config, "lambda_ratio must lie in (0, 1)");
        }
        if (lambda_rule == LambdaRule::fixed && !(fixed_lambda >= 0.0)) {
            throw Error(ErrorCode::invalid_config, "fixed lambda must be >= 0");
        }
        if (lambda_rule == LambdaRule::theoretical && !(theory_a > 0.0)) {
            throw Error(ErrorCode::invalid_config, "theoretical rule needs A > 0");
        }
    }
};

inline std::vector<double> default_r2_grid(Index n)
{
    std::vector<double> grid(10);
    for (int k = 0; k < 10; ++k) {
        grid[static_cast<std::size_t>(k)] = std::pow(10.0, -4.0 + 6.0 * k / 9.0) * static_cast<double>(n);
    }
    return grid;
}

/// Disjoint, exhaustive column groups. Indices are 0-based.
struct Partition
{
    std::vector<std::vector<Index>> groups;

    std::size_t m() const { return groups.size(); }

    Index max_width() const
    {
        Index w = 0;
        for (const auto& g : groups) w = std::max(w, static_cast<Index>(g.size()));
        return w;
    }

    void validate(Index p) const
    {
        std::vector<char> seen(static_cast<std::size_t>(p), 0);
        for (const auto& g : groups) {
            if (g.empty()) throw Error(ErrorCode::coverage_gap, "empty partition group");
            for (Index j : g) {
                if (j < 0 || j >= p) throw Error(ErrorCode::coverage_gap, "column index out of range");
                if (seen[static_cast<std::size_t>(j)]++) {
                    throw Error(ErrorCode::coverage_gap, "column " + std::to_string(j) + " assigned twice");
                }
            }
        }
        for (Index j = 0; j < p; ++j) {
            if (!seen[static_cast<std::size_t>(j)]) {
                throw Error(ErrorCode::coverage_gap, "column " + std::to_string(j) + " unassigned");
            }
        }
    }

    bool operator==(const Partition&) const = default;
};

struct StageTimes
{
    double gram = 0.0;
    double eig = 0.0;
    double decorrelate = 0.0;
    double worker_fit = 0.0;
    double merge = 0.0;
    double refine = 0.0;
};

struct WorkerReport
{
    int worker = 0;
    Index columns = 0;
    double lambda = 0.0;
    Index support_size = 0;
    double kkt_max_violation = 0.0;
    double fit_ms = 0.0;
};

struct RefineReport
{
    bool sparsified = false;
    bool empty_support = false;
    double r2 = 0.0;
    std::vector<double> cv_mse;  // per r2 grid value
};

struct FitResult
{
    Vector beta;
    double intercept = 0.0;
    std::vector<Index> support;
    StageTimes stage_times;
    std::vector<WorkerReport> worker_reports;
    Partition partition;
    Vector stage2_beta;  // merged Stage-2 coefficients in raw units
    std::optional<RefineReport> refine_report;
    /// Preprocessing plus the slowest single worker plus merge/refine, in ms.
    double runtime_ms = 0.0;
};

// ---------------------------------------------------------------------------
// Stage 1

namespace detail {

using Clock = std::chrono::steady_clock;

inline double ms_since(Clock::time_point t0)
{
    return std::chrono::duration<double, std::milli>(Clock::now() - t0).count();
}

inline std::vector<Index> nonzero_indices(const Vector& v)
{
    std::vector<Index> out;
    for (Index j = 0; j < v.size(); ++j) {
        if (v(j) != 0.0) out.push_back(j);
    }
    return out;
}

inline Matrix gather_columns(const Matrix& X, std::span<const Index> cols)
{
    Matrix out(X.rows(), static_cast<Index>(cols.size()));
    for (std::size_t k = 0; k < cols.size(); ++k) out.col(static_cast<Index>(k)) = X.col(cols[k]);
    return out;
}

} // namespace detail

/// Seeded uniform random assignment; group sizes differ by at most one and
/// each group lists its columns in ascending order.
inline Partition partition_columns(Index p, Index m, std::uint64_t seed)
{
    if (m < 1 || m > p) {
        throw Error(ErrorCode::invalid_m, "m = " + std::to_string(m) + " outside [1, " + std::to_string(p) + "]");
    }
    std::vector<Index> perm(static_cast<std::size_t>(p));
    std::iota(perm.begin(), perm.end(), Index{0});
    rng::Stream s(seed, rng::Stage::partition, 0);
    for (std::size_t i = perm.size(); i > 1; --i) {
        std::swap(perm[i - 1], perm[static_cast<std::size_t>(s.below(i))]);
    }
    Partition part;
    part.groups.resize(static_cast<std::size_t>(m));
    const Index base = p / m;
    const Index extra = p % m;
    std::size_t pos = 0;
    for (Index g = 0; g < m; ++g) {
        const Index width = base + (g < extra ? 1 : 0);
        auto& grp = part.groups[static_cast<std::size_t>(g)];
        grp.assign(perm.begin() + static_cast<std::ptrdiff_t>(pos),
                   perm.begin() + static_cast<std::ptrdiff_t>(pos + static_cast<std::size_t>(width)));
        std::sort(grp.begin(), grp.end());
        pos += static_cast<std::size_t>(width);
    }
    return part;
}

/// Plain text: a `partition p=<p> m=<m>` header, then one line per group
/// with space-separated 0-based column indices.
inline void write_partition(std::ostream& out, const Partition& part, Index p)
{
    out << "partition p=" << p << " m=" << part.m() << '\n';
    for (const auto& g : part.groups) {
        for (std::size_t k = 0; k < g.size(); ++k) out << (k ? " " : "") << g[k];
        out << '\n';
    }
}

inline Partition read_partition(std::istream& in, Index* p_out = nullptr)
{
    std::string header;
    if (!std::getline(in, header)) throw Error(ErrorCode::parse, "empty partition file");
    long long p = 0;
    long long m = 0;
    if (std::sscanf(header.c_str(), "partition p=%lld m=%lld", &p, &m) != 2) {
        throw Error(ErrorCode::parse, "bad partition header '" + header + "'");
    }
    Partition part;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty() || line == "\r") continue;
        std::istringstream ls(line);
        std::vector<Index> g;
        long long j = 0;
        while (ls >> j) g.push_back(static_cast<Index>(j));
        if (!ls.eof()) throw Error(ErrorCode::parse, "bad partition line '" + line + "'");
        part.groups.push_back(std::move(g));
    }
    if (static_cast<long long>(part.m()) != m) throw Error(ErrorCode::parse, "group count disagrees with header");
    part.validate(static_cast<Index>(p));
    if (p_out) *p_out = static_cast<Index>(p);
    return part;
}

/// F = sum_i X_i X_i^T. Partial Grams may be formed concurrently; the sum is
/// always taken in ascending block order.
inline Matrix accumulate_gram(std::span<const Matrix> blocks, std::size_t threads = 1)
{
    if (blocks.empty()) throw Error(ErrorCode::dimension_mismatch, "no blocks");
    const Index n = blocks.front().rows();
    for (const auto& b : blocks) {
        if (b.rows() != n) throw Error(ErrorCode::dimension_mismatch, "blocks disagree on row count");
    }
    std::vector<Matrix> partial(blocks.size());
    parallel_for(blocks.size(), threads, [&](std::size_t i) {
        Matrix g = Matrix::Zero(n, n);
        g.selfadjointView<Eigen::Lower>().rankUpdate(blocks[i]);
        g.triangularView<Eigen::StrictlyUpper>() = g.transpose();
        partial[i] = std::move(g);
    });
    Matrix F = std::move(partial[0]);
    for (std::size_t i = 1; i < partial.size(); ++i) F += partial[i];
    return F;
}

/// (F_bar y, F_bar X_i).
inline std::pair<Vector, Matrix> decorrelate(const Matrix& fbar, const Matrix& block, const Vector& y)
{
    if (fbar.rows() != fbar.cols() || fbar.cols() != block.rows() || y.size() != block.rows()) {
        throw Error(ErrorCode::dimension_mismatch, "decorrelate dimensions disagree");
    }
    return {fbar * y, fbar * block};
}

/// Everything Stage 1 produces. `transform` is empty in identity mode.
struct Stage1
{
    linalg::CenterScaleResult cs;
    Partition partition;
    std::vector<Matrix> blocks;          // standardized X_i, as shipped to worker i
    std::optional<Matrix> gram;
    std::optional<linalg::EigenDecomposition> eig;
    std::optional<Matrix> transform;
    Vector y_tilde;
    std::vector<Matrix> blocks_tilde;    // F_bar X_i
    StageTimes times;
};

inline Matrix build_transform(const linalg::EigenDecomposition& eig, const DecoConfig& config, Index p)
{
    linalg::InverseRootOptions opts;
    opts.pseudo_inverse = config.pseudo_inverse;
    const double r1 = config.r1_value();
    if (config.mode == DecorrelationMode::svd_rows) {
        Vector w = linalg::inverse_root_weights(eig, r1, static_cast<double>(p), opts);
        return w.asDiagonal() * eig.vectors.transpose();
    }
    return linalg::inv_sqrt_from_eig(eig, r1, static_cast<double>(p), opts);
}

/// Standardize, partition, accumulate F, invert, decorrelate. Set
/// `keep_blocks` false to drop the undecorrelated blocks once used.
inline Stage1 run_stage1(const Dataset& data, const DecoConfig& config, bool keep_blocks = false)
{
    using detail::Clock;
    const Index p = data.p();
    config.validate(p);
    Stage1 s;

    auto t0 = Clock::now();
    try {
        s.cs = linalg::center_scale(data.X, data.y, config.scale_columns);
        s.partition = partition_columns(p, config.m, config.seed);
        s.blocks.reserve(s.partition.m());
        for (const auto& g : s.partition.groups) s.blocks.push_back(detail::gather_columns(s.cs.x, g));
        if (config.mode != DecorrelationMode::identity) {
            s.gram = accumulate_gram(s.blocks, config.threads);
        }
    } catch (const Error& e) {
        e.rethrow_tagged("stage gram");
    }
    s.times.gram = detail::ms_since(t0);

    if (config.mode != DecorrelationMode::identity) {
        t0 = Clock::now();
        try {
            s.eig = linalg::sym_eig(*s.gram);
            s.transform = build_transform(*s.eig, config, p);
        } catch (const Error& e) {
            e.rethrow_tagged("stage eig");
        }
        s.times.eig = detail::ms_since(t0);
    }

    t0 = Clock::now();
    s.blocks_tilde.resize(s.blocks.size());
    if (s.transform) {
        s.y_tilde = *s.transform * s.cs.y0;
        parallel_for(s.blocks.size(), config.threads, [&](std::size_t i) {
            s.blocks_tilde[i] = *s.transform * s.blocks[i];
        });
    } else {
        s.y_tilde = s.cs.y0;
        s.blocks_tilde = s.blocks;
    }
    if (!keep_blocks) {
        s.blocks.clear();
        s.blocks.shrink_to_fit();
    }
    s.times.decorrelate = detail::ms_since(t0);
    return s;
}

// ---------------------------------------------------------------------------
// Stage 2

/// What a worker needs beyond its block: identity and global sizes.
struct WorkerContext
{
    int worker = 0;
    Index p_total = 0;
    double sigma0 = 0.0;  // sample sd of the raw response
};

struct WorkerResult
{
    Vector coef;
    WorkerReport report;
};

namespace detail {

inline double theoretical_lambda(const DecoConfig& config, const WorkerContext& ctx, Index n)
{
    return config.theory_a * ctx.sigma0 *
           std::sqrt(std::log(static_cast<double>(ctx.p_total)) / static_cast<double>(n));
}

/// Lasso with lambda chosen per the configured rule; returns (coef, lambda).
inline std::pair<Vector, double> select_and_fit(const Eigen::Ref<const Matrix>& X,
                                                const Eigen::Ref<const Vector>& y,
                                                const DecoConfig& config, const WorkerContext& ctx)
{
    const Index n = X.rows();
    const Index q = X.cols();
    if (q == 0) return {Vector(0), 0.0};
    const bool zero_design = X.cwiseAbs().maxCoeff() == 0.0;
    switch (config.lambda_rule) {
        case LambdaRule::fixed:
        case LambdaRule::theoretical: {
            const double lambda = config.lambda_rule == LambdaRule::fixed ? config.fixed_lambda
                                                                          : theoretical_lambda(config, ctx, n);
            if (zero_design) return {Vector::Zero(q), lambda};
            return {lasso::cd_fit(lasso::LassoProblem{X, y, lambda}).beta, lambda};
        }
        case LambdaRule::ebic: {
            const double top = lasso::lambda_max(X, y);
            if (!(top > 0.0)) return {Vector::Zero(q), 0.0};
            const Vector grid = lasso::lambda_grid(X, y, config.n_lambda, config.lambda_ratio);
            const lasso::LassoPath path = lasso::fit_path(X, y, grid);
            const std::size_t k = lasso::ebic_select(path, n, ctx.p_total, config.ebic_gamma);
            return {path.betas[k], path.lambdas[k]};
        }
    }
    return {Vector::Zero(q), 0.0};
}

} // namespace detail

/// One worker's Stage-2 fit on (y_tilde, X_tilde_i).
inline WorkerResult fit_worker(const Vector& y_tilde, const Matrix& block_tilde, const DecoConfig& config,
                               const WorkerContext& ctx)
{
    const auto t0 = detail::Clock::now();
    if (block_tilde.cols() == 0) {
        throw Error(ErrorCode::dimension_mismatch, "worker " + std::to_string(ctx.worker) + ": empty block");
    }
    WorkerResult out;
    try {
        auto [coef, lambda] = detail::select_and_fit(block_tilde, y_tilde, config, ctx);
        out.coef = std::move(coef);
        out.report.lambda = lambda;
        out.report.kkt_max_violation =
            lasso::kkt_check(block_tilde, y_tilde, out.coef, lambda, 0.0).max_violation;
    } catch (const Error& e) {
        e.rethrow_tagged("worker " + std::to_string(ctx.worker));
    }
    out.report.worker = ctx.worker;
    out.report.columns = block_tilde.cols();
    out.report.support_size = lasso::count_nonzero(out.coef);
    out.report.fit_ms = detail::ms_since(t0);
    return out;
}

/// Scatters worker coefficients to their columns, undoes column scaling and
/// recovers the intercept from the raw means.
inline std::pair<Vector, double> merge(std::span<const Vector> worker_coefs, const Partition& partition,
                                       const Vector& col_means, const Vector& col_scales, double y_mean)
{
    const Index p = col_means.size();
    if (worker_coefs.size() != partition.m()) {
        throw Error(ErrorCode::coverage_gap, "worker count differs from partition size");
    }
    partition.validate(p);
    Vector beta = Vector::Zero(p);
    for (std::size_t i = 0; i < worker_coefs.size(); ++i) {
        const auto& g = partition.groups[i];
        if (static_cast<std::size_t>(worker_coefs[i].size()) != g.size()) {
            throw Error(ErrorCode::coverage_gap, "worker " + std::to_string(i) + " returned a vector of the wrong size");
        }
        for (std::size_t k = 0; k < g.size(); ++k) {
            beta(g[k]) = worker_coefs[i](static_cast<Index>(k)) / col_scales(g[k]);
        }
    }
    const double intercept = y_mean - col_means.dot(beta);
    return {beta, intercept};
}

// ---------------------------------------------------------------------------
// Stage 3

struct RefineResult
{
    Vector beta;
    double intercept = 0.0;
    RefineReport report;
};

namespace detail {

/// Fold id per sample: seeded shuffle, then contiguous blocks.
inline std::vector<int> cv_fold_ids(Index n, int folds, std::uint64_t seed)
{
    std::vector<Index> perm(static_cast<std::size_t>(n));
    std::iota(perm.begin(), perm.end(), Index{0});
    rng::Stream s(seed, rng::Stage::cv_folds, 0);
    for (std::size_t i = perm.size(); i > 1; --i) {
        std::swap(perm[i - 1], perm[static_cast<std::size_t>(s.below(i))]);
    }
    std::vector<int> ids(static_cast<std::size_t>(n));
    const Index base = n / folds;
    const Index extra = n % folds;
    std::size_t pos = 0;
    for (int f = 0; f < folds; ++f) {
        const Index width = base + (f < extra ? 1 : 0);
        for (Index k = 0; k < width; ++k) ids[static_cast<std::size_t>(perm[pos++])] = f;
    }
    return ids;
}

/// Ridge with intercept: centers by the given rows' means, then solves.
inline std::pair<Vector, double> centered_ridge(const Matrix& X, const Vector& y, double r2)
{
    const Vector xm = X.colwise().mean();
    const double ym = y.mean();
    const Matrix xc = X.rowwise() - xm.transpose();
    const Vector b = linalg::ridge_solve(xc, y.array() - ym, r2);
    return {b, ym - xm.dot(b)};
}

} // namespace detail

/// Stage 3. `beta` supplies the Stage-2 support; `X_tilde_selected` holds the
/// decorrelated standardized columns of that support (used only when the
/// support has at least n members and must be sparsified first). The ridge
/// refit runs on the raw columns with r2 picked by K-fold CV.
inline RefineResult refine(const Vector& beta, const Dataset& raw, const Vector& y_tilde,
                           const Matrix& X_tilde_selected, const DecoConfig& config, Index p_total)
{
    const Index n = raw.n();
    RefineResult out;
    out.beta = Vector::Zero(raw.p());
    std::vector<Index> support = detail::nonzero_indices(beta);

    if (static_cast<Index>(support.size()) >= n) {
        if (X_tilde_selected.cols() != static_cast<Index>(support.size())) {
            throw Error(ErrorCode::dimension_mismatch, "X_tilde_selected must hold the Stage-2 support");
        }
        WorkerContext ctx{0, p_total, std::sqrt(sample_variance(raw.y))};
        auto [coef, lambda] = detail::select_and_fit(X_tilde_selected, y_tilde, config, ctx);
        (void)lambda;
        std::vector<Index> kept;
        for (std::size_t k = 0; k < support.size(); ++k) {
            if (coef(static_cast<Index>(k)) != 0.0) kept.push_back(support[k]);
        }
        support = std::move(kept);
        out.report.sparsified = true;
    }

    if (support.empty()) {
        out.intercept = raw.y.mean();
        out.report.empty_support = true;
        return out;
    }

    const Matrix xm = detail::gather_columns(raw.X, support);
    const std::vector<double> grid = config.r2_grid.empty() ? default_r2_grid(n) : config.r2_grid;
    const int folds = config.cv_folds;
    if (folds > n) throw Error(ErrorCode::invalid_config, "more CV folds than samples");
    const std::vector<int> fold_of = detail::cv_fold_ids(n, folds, config.seed);

    // sse[g * folds + f]: held-out squared error of grid value g on fold f.
    std::vector<double> sse(grid.size() * static_cast<std::size_t>(folds), 0.0);
    parallel_for(sse.size(), config.threads, [&](std::size_t slot) {
        const double r2 = grid[slot / static_cast<std::size_t>(folds)];
        const int f = static_cast<int>(slot % static_cast<std::size_t>(folds));
        std::vector<Index> train;
        std::vector<Index> test;
        for (Index i = 0; i < n; ++i) (fold_of[static_cast<std::size_t>(i)] == f ? test : train).push_back(i);
        const Matrix xt = xm(train, Eigen::all);
        const Vector yt = raw.y(train);
        auto [b, b0] = detail::centered_ridge(xt, yt, r2);
        const Vector pred = (xm(test, Eigen::all) * b).array() + b0;
        sse[slot] = (raw.y(test) - pred).squaredNorm();
    });

    out.report.cv_mse.resize(grid.size());
    std::size_t best = 0;
    for (std::size_t g = 0; g < grid.size(); ++g) {
        double total = 0.0;
        for (int f = 0; f < folds; ++f) total += sse[g * static_cast<std::size_t>(folds) + static_cast<std::size_t>(f)];
        out.report.cv_mse[g] = total / static_cast<double>(n);
        if (out.report.cv_mse[g] < out.report.cv_mse[best]) best = g;
    }
    out.report.r2 = grid[best];

    auto [b, b0] = detail::centered_ridge(xm, raw.y, grid[best]);
    for (std::size_t k = 0; k < support.size(); ++k) out.beta(support[k]) = b(static_cast<Index>(k));
    out.intercept = b0;
    return out;
}

// ---------------------------------------------------------------------------
// Full pipeline

/// Stage 1 (standardize, partition, Gram, inverse root, decorrelate),
/// Stage 2 (independent per-worker lasso, merge), Stage 3 when config.refine.
inline FitResult run_deco(const Dataset& data, const DecoConfig& config)
{
    using detail::Clock;
    const Index n = data.n();
    const Index p = data.p();

    Stage1 s1 = run_stage1(data, config);
    FitResult res;
    res.stage_times = s1.times;
    res.partition = s1.partition;

    const double sigma0 = std::sqrt(sample_variance(data.y));
    std::vector<WorkerResult> workers(s1.partition.m());
    auto t0 = Clock::now();
    parallel_for(workers.size(), config.threads, [&](std::size_t i) {
        WorkerContext ctx{static_cast<int>(i), p, sigma0};
        workers[i] = fit_worker(s1.y_tilde, s1.blocks_tilde[i], config, ctx);
    });
    res.stage_times.worker_fit = detail::ms_since(t0);

    t0 = Clock::now();
    std::vector<Vector> coefs;
    coefs.reserve(workers.size());
    double slowest = 0.0;
    for (auto& w : workers) {
        coefs.push_back(std::move(w.coef));
        slowest = std::max(slowest, w.report.fit_ms);
        res.worker_reports.push_back(w.report);
    }
    try {
        std::tie(res.beta, res.intercept) =
            merge(coefs, s1.partition, s1.cs.col_means, s1.cs.col_scales, s1.cs.y_mean);
    } catch (const Error& e) {
        e.rethrow_tagged("stage merge");
    }
    res.stage2_beta = res.beta;
    res.stage_times.merge = detail::ms_since(t0);

    if (config.refine) {
        t0 = Clock::now();
        try {
            const std::vector<Index> support = detail::nonzero_indices(res.beta);
            Matrix selected;
            if (static_cast<Index>(support.size()) >= n) {
                // Locate each support column inside its worker's decorrelated block.
                std::vector<std::pair<std::size_t, Index>> where(static_cast<std::size_t>(p));
                for (std::size_t g = 0; g < s1.partition.m(); ++g) {
                    const auto& grp = s1.partition.groups[g];
                    for (std::size_t k = 0; k < grp.size(); ++k) where[static_cast<std::size_t>(grp[k])] = {g, static_cast<Index>(k)};
                }
                selected.resize(n, static_cast<Index>(support.size()));
                for (std::size_t k = 0; k < support.size(); ++k) {
                    auto [g, col] = where[static_cast<std::size_t>(support[k])];
                    selected.col(static_cast<Index>(k)) = s1.blocks_tilde[g].col(col);
                }
            }
            RefineResult rr = refine(res.beta, data, s1.y_tilde, selected, config, p);
            res.beta = std::move(rr.beta);
            res.intercept = rr.intercept;
            res.refine_report = std::move(rr.report);
        } catch (const Error& e) {
            e.rethrow_tagged("stage refine");
        }
        res.stage_times.refine = detail::ms_since(t0);
    }

    res.support = detail::nonzero_indices(res.beta);
    const StageTimes& t = res.stage_times;
    res.runtime_ms = t.gram + t.eig + t.decorrelate + slowest + t.merge + t.refine;
    return res;
}

enum class Baseline { lasso_full, lasso_refine, lasso_naive };

inline std::string to_string(Baseline b)
{
    switch (b) {
        case Baseline::lasso_full: return "lasso_full";
        case Baseline::lasso_refine: return "lasso_refine";
        case Baseline::lasso_naive: return "lasso_naive";
    }
    return "?";
}

/// lasso_full: path + lambda rule on the standardized full data.
/// lasso_refine: lasso_full followed by the CV ridge refit on its support.
/// lasso_naive: the configured partition with decorrelation replaced by the
/// identity, no refinement.
inline FitResult run_baseline(const Dataset& data, Baseline which, DecoConfig config)
{
    config.mode = DecorrelationMode::identity;
    switch (which) {
        case Baseline::lasso_full:
            config.m = 1;
            config.refine = false;
            break;
        case Baseline::lasso_refine:
            config.m = 1;
            config.refine = true;
            break;
        case Baseline::lasso_naive:
            config.refine = false;
            break;
    }
    FitResult res = run_deco(data, config);
    const StageTimes& t = res.stage_times;
    if (which != Baseline::lasso_naive) {
        res.runtime_ms = t.gram + t.eig + t.decorrelate + t.worker_fit + t.merge + t.refine;
    }
    return res;
}

} // namespace deco
