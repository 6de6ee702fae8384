#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <map>
#include <numeric>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "deco/datagen.hpp"
#include "deco/deco.hpp"
#include "deco/error.hpp"
#include "deco/eval.hpp"
#include "deco/format.hpp"
#include "deco/parallel.hpp"
#include "deco/rng.hpp"

namespace deco::experiment {

enum class Method { deco2, deco3, lasso_full, lasso_refine, lasso_naive };

inline std::string to_string(Method m)
{
    switch (m) {
        case Method::deco2: return "deco2";
        case Method::deco3: return "deco3";
        case Method::lasso_full: return "lasso_full";
        case Method::lasso_refine: return "lasso_refine";
        case Method::lasso_naive: return "lasso_naive";
    }
    return "?";
}

inline Method parse_method(const std::string& s)
{
    if (s == "deco2") return Method::deco2;
    if (s == "deco3") return Method::deco3;
    if (s == "lasso_full") return Method::lasso_full;
    if (s == "lasso_refine") return Method::lasso_refine;
    if (s == "lasso_naive") return Method::lasso_naive;
    throw Error(ErrorCode::invalid_config, "unknown method '" + s + "'");
}

/// Methods whose result depends on the number of workers.
inline bool uses_partition(Method m)
{
    return m == Method::deco2 || m == Method::deco3 || m == Method::lasso_naive;
}

struct ExperimentConfig
{
    std::optional<ModelSpec> model;
    std::string csv_path;          // used when model is unset
    std::string response = "y";
    double test_fraction = 0.2;    // CSV input: held-out share per replication
    Index holdout_n = 0;           // synthetic input: held-out rows for pred_mse
    std::vector<Method> methods{Method::deco2};
    int replications = 1;
    std::vector<Index> m_values{1};
    DecoConfig deco;
    std::string output = "results.csv";
    std::uint64_t seed = 1;

    void validate() const
    {
        auto fail = [](const std::string& m) { throw Error(ErrorCode::invalid_config, m); };
        if (replications < 1) fail("replications must be >= 1");
        if (methods.empty()) fail("no methods selected");
        if (m_values.empty()) fail("m_values is empty");
        if (!model && csv_path.empty()) fail("either model.* or data.csv is required");
        if (model) {
            model->validate();
            for (Index m : m_values) {
                if (m < 1 || m > model->p) fail("m = " + std::to_string(m) + " outside [1, p]");
            }
        }
        if (!(test_fraction > 0.0 && test_fraction < 1.0)) fail("data.test_fraction must lie in (0, 1)");
        if (holdout_n < 0) fail("holdout_n must be >= 0");
    }
};

// ---------------------------------------------------------------------------
// Config files

namespace detail {

inline std::string trim(std::string_view s)
{
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string_view::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return std::string(s.substr(b, e - b + 1));
}

inline nlohmann::json scalar_value(const std::string& raw)
{
    if (raw == "true") return true;
    if (raw == "false") return false;
    if (raw.size() >= 2 && raw.front() == '"' && raw.back() == '"') return raw.substr(1, raw.size() - 2);
    try {
        const double v = parse_double(raw);
        const bool integral = raw.find_first_of(".eE") == std::string::npos;
        if (integral && std::abs(v) < 9e15) return static_cast<long long>(v);
        return v;
    } catch (const Error&) {
        return raw;
    }
}

inline void put_dotted(nlohmann::json& root, const std::string& key, nlohmann::json value, int line)
{
    nlohmann::json* node = &root;
    std::size_t start = 0;
    for (;;) {
        const auto dot = key.find('.', start);
        const std::string part = key.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
        if (part.empty()) throw Error(ErrorCode::invalid_config, "line " + std::to_string(line) + ": bad key '" + key + "'");
        if (dot == std::string::npos) {
            (*node)[part] = std::move(value);
            return;
        }
        node = &(*node)[part];
        if (!node->is_null() && !node->is_object()) {
            throw Error(ErrorCode::invalid_config, "line " + std::to_string(line) + ": '" + key + "' conflicts with a scalar");
        }
        start = dot + 1;
    }
}

} // namespace detail

/// Parses `key = value` lines. Keys may be dotted (`model.n = 100`) and an
/// optional `[section]` line prefixes following keys. `#` starts a comment.
/// Comma-separated values become lists.
inline nlohmann::json parse_key_value(std::string_view text)
{
    nlohmann::json root = nlohmann::json::object();
    std::string section;
    std::istringstream in{std::string(text)};
    std::string raw;
    int line_no = 0;
    while (std::getline(in, raw)) {
        ++line_no;
        const auto hash = raw.find('#');
        std::string line = detail::trim(hash == std::string::npos ? raw : raw.substr(0, hash));
        if (line.empty()) continue;
        if (line.front() == '[') {
            if (line.back() != ']') throw Error(ErrorCode::invalid_config, "line " + std::to_string(line_no) + ": unterminated section");
            section = detail::trim(line.substr(1, line.size() - 2));
            continue;
        }
        const auto eq = line.find('=');
        if (eq == std::string::npos) {
            throw Error(ErrorCode::invalid_config, "line " + std::to_string(line_no) + ": expected key = value");
        }
        std::string key = detail::trim(line.substr(0, eq));
        const std::string value = detail::trim(line.substr(eq + 1));
        if (!section.empty()) key = section + "." + key;
        nlohmann::json v;
        if (value.find(',') != std::string::npos) {
            v = nlohmann::json::array();
            std::istringstream items(value);
            std::string item;
            while (std::getline(items, item, ',')) v.push_back(detail::scalar_value(detail::trim(item)));
        } else {
            v = detail::scalar_value(value);
        }
        detail::put_dotted(root, key, std::move(v), line_no);
    }
    return root;
}

/// Key-value text, or JSON when the first non-blank character is `{`.
inline nlohmann::json parse_config_text(std::string_view text)
{
    const auto first = text.find_first_not_of(" \t\r\n");
    if (first != std::string_view::npos && text[first] == '{') {
        try {
            return nlohmann::json::parse(text);
        } catch (const nlohmann::json::exception& e) {
            throw Error(ErrorCode::invalid_config, std::string("JSON: ") + e.what());
        }
    }
    return parse_key_value(text);
}

inline nlohmann::json load_config_file(const std::string& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorCode::io, "cannot read config '" + path + "'");
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_config_text(ss.str());
}

namespace detail {

template <class T>
T get_as(const nlohmann::json& v, const std::string& key)
{
    try {
        return v.get<T>();
    } catch (const nlohmann::json::exception&) {
        throw Error(ErrorCode::invalid_config, "bad value for '" + key + "'");
    }
}

inline nlohmann::json as_list(const nlohmann::json& v)
{
    return v.is_array() ? v : nlohmann::json::array({v});
}

inline void check_keys(const nlohmann::json& obj, const std::string& prefix, std::initializer_list<std::string_view> allowed)
{
    if (!obj.is_object()) throw Error(ErrorCode::invalid_config, "'" + prefix + "' must be a section");
    for (const auto& [k, _] : obj.items()) {
        if (std::find(allowed.begin(), allowed.end(), k) == allowed.end()) {
            throw Error(ErrorCode::invalid_config, "unknown key '" + prefix + (prefix.empty() ? "" : ".") + k + "'");
        }
    }
}

} // namespace detail

/// Applies `deco.*` keys onto a DecoConfig.
inline void apply_deco_overrides(DecoConfig& cfg, const nlohmann::json& d)
{
    using detail::get_as;
    detail::check_keys(d, "deco",
                       {"m", "r1", "r2_grid", "cv_folds", "lambda_rule", "ebic_gamma", "theory_a", "fixed_lambda",
                        "refine", "scale_columns", "mode", "pseudo_inverse", "n_lambda", "lambda_ratio", "seed"});
    if (d.contains("m")) cfg.m = get_as<Index>(d["m"], "deco.m");
    if (d.contains("r1")) cfg.r1 = get_as<double>(d["r1"], "deco.r1");
    if (d.contains("r2_grid")) {
        cfg.r2_grid.clear();
        for (const auto& x : detail::as_list(d["r2_grid"])) cfg.r2_grid.push_back(get_as<double>(x, "deco.r2_grid"));
    }
    if (d.contains("cv_folds")) cfg.cv_folds = get_as<int>(d["cv_folds"], "deco.cv_folds");
    if (d.contains("lambda_rule")) cfg.lambda_rule = parse_lambda_rule(get_as<std::string>(d["lambda_rule"], "deco.lambda_rule"));
    if (d.contains("ebic_gamma")) cfg.ebic_gamma = get_as<double>(d["ebic_gamma"], "deco.ebic_gamma");
    if (d.contains("theory_a")) cfg.theory_a = get_as<double>(d["theory_a"], "deco.theory_a");
    if (d.contains("fixed_lambda")) {
        cfg.fixed_lambda = get_as<double>(d["fixed_lambda"], "deco.fixed_lambda");
        if (!d.contains("lambda_rule")) cfg.lambda_rule = LambdaRule::fixed;
    }
    if (d.contains("refine")) cfg.refine = get_as<bool>(d["refine"], "deco.refine");
    if (d.contains("scale_columns")) cfg.scale_columns = get_as<bool>(d["scale_columns"], "deco.scale_columns");
    if (d.contains("mode")) cfg.mode = parse_decorrelation_mode(get_as<std::string>(d["mode"], "deco.mode"));
    if (d.contains("pseudo_inverse")) cfg.pseudo_inverse = get_as<bool>(d["pseudo_inverse"], "deco.pseudo_inverse");
    if (d.contains("n_lambda")) cfg.n_lambda = get_as<int>(d["n_lambda"], "deco.n_lambda");
    if (d.contains("lambda_ratio")) cfg.lambda_ratio = get_as<double>(d["lambda_ratio"], "deco.lambda_ratio");
    if (d.contains("seed")) cfg.seed = get_as<std::uint64_t>(d["seed"], "deco.seed");
}

inline ModelSpec parse_model(const nlohmann::json& m)
{
    using detail::get_as;
    detail::check_keys(m, "model", {"kind", "n", "p", "rho", "n_factors", "group_noise_sd", "target_r2", "seed"});
    ModelSpec s;
    if (m.contains("kind")) s.kind = parse_model_kind(get_as<std::string>(m["kind"], "model.kind"));
    if (m.contains("n")) s.n = get_as<Index>(m["n"], "model.n");
    if (m.contains("p")) s.p = get_as<Index>(m["p"], "model.p");
    if (m.contains("rho")) s.rho = get_as<double>(m["rho"], "model.rho");
    if (m.contains("n_factors")) s.n_factors = get_as<Index>(m["n_factors"], "model.n_factors");
    if (m.contains("group_noise_sd")) s.group_noise_sd = get_as<double>(m["group_noise_sd"], "model.group_noise_sd");
    if (m.contains("target_r2")) s.target_r2 = get_as<double>(m["target_r2"], "model.target_r2");
    if (m.contains("seed")) s.seed = get_as<std::uint64_t>(m["seed"], "model.seed");
    return s;
}

inline ExperimentConfig parse_experiment(const nlohmann::json& j)
{
    using detail::get_as;
    detail::check_keys(j, "", {"model", "data", "methods", "replications", "m_values", "deco", "output", "seed", "holdout_n"});
    ExperimentConfig c;
    if (j.contains("model")) c.model = parse_model(j["model"]);
    if (j.contains("data")) {
        const auto& d = j["data"];
        detail::check_keys(d, "data", {"csv", "response", "test_fraction"});
        if (d.contains("csv")) c.csv_path = get_as<std::string>(d["csv"], "data.csv");
        if (d.contains("response")) c.response = get_as<std::string>(d["response"], "data.response");
        if (d.contains("test_fraction")) c.test_fraction = get_as<double>(d["test_fraction"], "data.test_fraction");
    }
    if (j.contains("methods")) {
        c.methods.clear();
        for (const auto& x : detail::as_list(j["methods"])) c.methods.push_back(parse_method(get_as<std::string>(x, "methods")));
    }
    if (j.contains("replications")) c.replications = get_as<int>(j["replications"], "replications");
    if (j.contains("m_values")) {
        c.m_values.clear();
        for (const auto& x : detail::as_list(j["m_values"])) c.m_values.push_back(get_as<Index>(x, "m_values"));
    }
    if (j.contains("deco")) apply_deco_overrides(c.deco, j["deco"]);
    if (j.contains("output")) c.output = get_as<std::string>(j["output"], "output");
    if (j.contains("seed")) c.seed = get_as<std::uint64_t>(j["seed"], "seed");
    if (j.contains("holdout_n")) c.holdout_n = get_as<Index>(j["holdout_n"], "holdout_n");
    return c;
}

// ---------------------------------------------------------------------------
// CSV ingestion

/// Reads a headed numeric CSV; `response` names the y column and all other
/// columns become features in file order. Non-numeric cells are errors.
inline Dataset import_csv(const std::string& path, const std::string& response = "y")
{
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorCode::io, "cannot read '" + path + "'");
    std::string line;
    if (!std::getline(in, line)) throw Error(ErrorCode::parse, path + ": missing header");
    std::vector<std::string> header;
    {
        std::istringstream hs(line);
        std::string cell;
        while (std::getline(hs, cell, ',')) header.push_back(detail::trim(cell));
    }
    const auto it = std::find(header.begin(), header.end(), response);
    if (it == header.end()) throw Error(ErrorCode::parse, path + ": no column named '" + response + "'");
    const auto ycol = static_cast<std::size_t>(it - header.begin());
    const std::size_t width = header.size();

    std::vector<double> values;
    std::size_t rows = 0;
    int line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (detail::trim(line).empty()) continue;
        std::size_t col = 0;
        std::size_t start = 0;
        for (;;) {
            const auto comma = line.find(',', start);
            const std::string_view cell(line.data() + start,
                                        (comma == std::string::npos ? line.size() : comma) - start);
            if (col >= width) throw Error(ErrorCode::parse, path + ":" + std::to_string(line_no) + ": too many cells");
            try {
                values.push_back(parse_double(cell));
            } catch (const Error& e) {
                throw Error(ErrorCode::parse, path + ":" + std::to_string(line_no) + ": column '" + header[col] + "': " + e.message());
            }
            ++col;
            if (comma == std::string::npos) break;
            start = comma + 1;
        }
        if (col != width) throw Error(ErrorCode::parse, path + ":" + std::to_string(line_no) + ": expected " + std::to_string(width) + " cells");
        ++rows;
    }

    Dataset d;
    const auto n = static_cast<Index>(rows);
    d.X.resize(n, static_cast<Index>(width - 1));
    d.y.resize(n);
    for (std::size_t i = 0; i < rows; ++i) {
        Index jx = 0;
        for (std::size_t c = 0; c < width; ++c) {
            const double v = values[i * width + c];
            if (c == ycol) {
                d.y(static_cast<Index>(i)) = v;
            } else {
                d.X(static_cast<Index>(i), jx++) = v;
            }
        }
    }
    linalg::require_finite(d.X, path);
    linalg::require_finite(d.y, path);
    return d;
}

// ---------------------------------------------------------------------------
// Runner

struct Row
{
    std::string method;
    Index m = 1;
    int rep = 0;
    eval::Metrics metrics;
    bool has_truth = false;
    double runtime_ms = 0.0;
    StageTimes times;
    std::string error;
};

struct Aggregate
{
    std::string method;
    Index m = 1;
    int count = 0;    // successful replications
    int failed = 0;
    double mse = 0.0;
    double fp = 0.0;
    double fn = 0.0;
    double sign_consistent = 0.0;
    std::optional<double> pred_mse;
    double runtime_ms = 0.0;
    StageTimes times;
    bool has_truth = false;
};

struct ExperimentResult
{
    std::vector<Row> rows;
    std::vector<Aggregate> aggregates;
    int failed_rows = 0;
};

inline DecoConfig method_config(Method method, const DecoConfig& base, Index m)
{
    DecoConfig c = base;
    c.m = m;
    c.refine = method == Method::deco3 || method == Method::lasso_refine;
    return c;
}

inline FitResult run_method(Method method, const Dataset& data, const DecoConfig& cfg)
{
    switch (method) {
        case Method::deco2:
        case Method::deco3: return run_deco(data, cfg);
        case Method::lasso_full: return run_baseline(data, Baseline::lasso_full, cfg);
        case Method::lasso_refine: return run_baseline(data, Baseline::lasso_refine, cfg);
        case Method::lasso_naive: return run_baseline(data, Baseline::lasso_naive, cfg);
    }
    throw Error(ErrorCode::invalid_config, "unknown method");
}

namespace detail {

struct RepData
{
    Dataset train;
    std::optional<Dataset> test;
};

inline RepData replication_data(const ExperimentConfig& cfg, const std::optional<Dataset>& csv, int rep)
{
    RepData out;
    const std::uint64_t data_seed = rng::mix_seed(cfg.seed, static_cast<std::uint64_t>(rep));
    if (cfg.model) {
        ModelSpec spec = *cfg.model;
        spec.seed = data_seed;
        out.train = generate(spec);
        if (cfg.holdout_n > 0) out.test = generate_holdout(spec, out.train, cfg.holdout_n);
        return out;
    }
    // CSV: seeded train/test split per replication.
    const Index n = csv->n();
    std::vector<Index> perm(static_cast<std::size_t>(n));
    std::iota(perm.begin(), perm.end(), Index{0});
    rng::Stream s(data_seed, rng::Stage::holdout, 0);
    for (std::size_t i = perm.size(); i > 1; --i) std::swap(perm[i - 1], perm[static_cast<std::size_t>(s.below(i))]);
    const auto n_test = std::clamp<Index>(static_cast<Index>(std::llround(cfg.test_fraction * static_cast<double>(n))), 1, n - 2);
    std::vector<Index> test(perm.begin(), perm.begin() + n_test);
    std::vector<Index> train(perm.begin() + n_test, perm.end());
    std::sort(test.begin(), test.end());
    std::sort(train.begin(), train.end());
    out.train.X = csv->X(train, Eigen::all);
    out.train.y = csv->y(train);
    Dataset t;
    t.X = csv->X(test, Eigen::all);
    t.y = csv->y(test);
    out.test = std::move(t);
    return out;
}

} // namespace detail

/// Runs every (replication, method, m) cell. Replications execute in
/// parallel; rows come back in replication order regardless of `threads`.
inline ExperimentResult run_experiment(const ExperimentConfig& cfg, std::size_t threads = 1)
{
    cfg.validate();
    std::optional<Dataset> csv;
    if (!cfg.model) csv = import_csv(cfg.csv_path, cfg.response);
    if (csv) {
        for (Index m : cfg.m_values) {
            if (m < 1 || m > csv->p()) throw Error(ErrorCode::invalid_config, "m outside [1, p]");
        }
    }

    std::vector<std::vector<Row>> per_rep(static_cast<std::size_t>(cfg.replications));
    parallel_for(per_rep.size(), threads, [&](std::size_t r) {
        const int rep = static_cast<int>(r);
        std::vector<Row>& rows = per_rep[r];
        std::optional<detail::RepData> data;
        std::string data_error;
        try {
            data = detail::replication_data(cfg, csv, rep);
        } catch (const std::exception& e) {
            data_error = e.what();
        }
        for (Method method : cfg.methods) {
            const std::vector<Index> ms = uses_partition(method) ? cfg.m_values : std::vector<Index>{1};
            for (Index m : ms) {
                Row row;
                row.method = to_string(method);
                row.m = m;
                row.rep = rep;
                if (!data) {
                    row.error = data_error;
                    rows.push_back(std::move(row));
                    continue;
                }
                try {
                    DecoConfig dc = method_config(method, cfg.deco, m);
                    dc.seed = rng::mix_seed(cfg.seed ^ 0x5EEDull, static_cast<std::uint64_t>(rep));
                    dc.threads = 1;
                    FitResult fit = run_method(method, data->train, dc);
                    if (data->train.beta_true) {
                        row.metrics = eval::compute_metrics(fit.beta, *data->train.beta_true);
                        row.has_truth = true;
                    }
                    if (data->test) {
                        row.metrics.pred_mse = eval::prediction_mse(data->test->X, data->test->y, fit.beta, fit.intercept);
                    }
                    row.runtime_ms = std::round(fit.runtime_ms);
                    row.times = fit.stage_times;
                } catch (const std::exception& e) {
                    row.error = e.what();
                }
                rows.push_back(std::move(row));
            }
        }
    });

    ExperimentResult out;
    for (auto& rows : per_rep) {
        for (auto& row : rows) out.rows.push_back(std::move(row));
    }

    for (Method method : cfg.methods) {
        const std::vector<Index> ms = uses_partition(method) ? cfg.m_values : std::vector<Index>{1};
        for (Index m : ms) {
            Aggregate a;
            a.method = to_string(method);
            a.m = m;
            double pred = 0.0;
            int pred_count = 0;
            for (const Row& row : out.rows) {
                if (row.method != a.method || row.m != m) continue;
                if (!row.error.empty()) {
                    ++a.failed;
                    continue;
                }
                ++a.count;
                a.has_truth = row.has_truth;
                a.mse += row.metrics.mse;
                a.fp += static_cast<double>(row.metrics.fp);
                a.fn += static_cast<double>(row.metrics.fn);
                a.sign_consistent += row.metrics.sign_consistent ? 1.0 : 0.0;
                if (row.metrics.pred_mse) {
                    pred += *row.metrics.pred_mse;
                    ++pred_count;
                }
                a.runtime_ms += row.runtime_ms;
                a.times.gram += std::round(row.times.gram);
                a.times.eig += std::round(row.times.eig);
                a.times.decorrelate += std::round(row.times.decorrelate);
                a.times.worker_fit += std::round(row.times.worker_fit);
                a.times.merge += std::round(row.times.merge);
                a.times.refine += std::round(row.times.refine);
            }
            if (a.count > 0) {
                const double c = a.count;
                a.mse /= c;
                a.fp /= c;
                a.fn /= c;
                a.sign_consistent /= c;
                a.runtime_ms /= c;
                a.times.gram /= c;
                a.times.eig /= c;
                a.times.decorrelate /= c;
                a.times.worker_fit /= c;
                a.times.merge /= c;
                a.times.refine /= c;
            }
            if (pred_count > 0) a.pred_mse = pred / pred_count;
            out.failed_rows += a.failed;
            out.aggregates.push_back(a);
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// Output

inline const std::vector<std::string>& result_columns()
{
    static const std::vector<std::string> cols{
        "method",  "m",           "rep",     "mse",         "fp",            "fn",
        "sign_consistent", "pred_mse", "runtime_ms", "gram_ms", "eig_ms", "decorrelate_ms",
        "worker_fit_ms", "merge_ms", "refine_ms", "error"};
    return cols;
}

inline bool is_timing_column(std::string_view name)
{
    return name.size() >= 3 && name.substr(name.size() - 3) == "_ms";
}

namespace detail {

inline std::string csv_escape(const std::string& s)
{
    if (s.find_first_of(",\"\n") == std::string::npos) return s;
    std::string out = "\"";
    for (char c : s) {
        if (c == '"') out += '"';
        out += c == '\n' ? ' ' : c;
    }
    return out + "\"";
}

inline std::string ms(double v) { return std::to_string(static_cast<long long>(std::llround(v))); }

} // namespace detail

/// Replication rows followed by one aggregate row per (method, m) whose rep
/// column reads `mean`. Runtimes in replication rows are integer ms.
inline std::string results_csv(const ExperimentResult& res)
{
    std::string out;
    const auto& cols = result_columns();
    for (std::size_t k = 0; k < cols.size(); ++k) out += (k ? "," : "") + cols[k];
    out += '\n';
    for (const Row& r : res.rows) {
        const bool ok = r.error.empty();
        const bool truth = ok && r.has_truth;
        out += r.method + ',' + std::to_string(r.m) + ',' + std::to_string(r.rep) + ',';
        out += (truth ? format_double(r.metrics.mse) : "") + ',';
        out += (truth ? std::to_string(r.metrics.fp) : "") + ',';
        out += (truth ? std::to_string(r.metrics.fn) : "") + ',';
        out += (truth ? std::string(r.metrics.sign_consistent ? "1" : "0") : "") + ',';
        out += (ok && r.metrics.pred_mse ? format_double(*r.metrics.pred_mse) : "") + ',';
        if (ok) {
            out += detail::ms(r.runtime_ms) + ',' + detail::ms(r.times.gram) + ',' + detail::ms(r.times.eig) + ',' +
                   detail::ms(r.times.decorrelate) + ',' + detail::ms(r.times.worker_fit) + ',' +
                   detail::ms(r.times.merge) + ',' + detail::ms(r.times.refine) + ',';
        } else {
            out += ",,,,,,,";
        }
        out += detail::csv_escape(r.error) + '\n';
    }
    for (const Aggregate& a : res.aggregates) {
        const bool ok = a.count > 0;
        const bool truth = ok && a.has_truth;
        out += a.method + ',' + std::to_string(a.m) + ",mean,";
        out += (truth ? format_double(a.mse) : "") + ',';
        out += (truth ? format_double(a.fp) : "") + ',';
        out += (truth ? format_double(a.fn) : "") + ',';
        out += (truth ? format_double(a.sign_consistent) : "") + ',';
        out += (ok && a.pred_mse ? format_double(*a.pred_mse) : "") + ',';
        if (ok) {
            out += format_double(a.runtime_ms) + ',' + format_double(a.times.gram) + ',' + format_double(a.times.eig) +
                   ',' + format_double(a.times.decorrelate) + ',' + format_double(a.times.worker_fit) + ',' +
                   format_double(a.times.merge) + ',' + format_double(a.times.refine) + ',';
        } else {
            out += ",,,,,,,";
        }
        out += a.failed ? std::to_string(a.failed) + " failed" : "";
        out += '\n';
    }
    return out;
}

/// Aggregate table with metrics as rows and methods as columns.
inline std::string summary_table_csv(const ExperimentResult& res)
{
    std::string out = "metric";
    for (const Aggregate& a : res.aggregates) out += "," + a.method + "@m=" + std::to_string(a.m);
    out += '\n';
    auto line = [&](const char* name, auto get) {
        out += name;
        for (const Aggregate& a : res.aggregates) out += "," + get(a);
        out += '\n';
    };
    auto if_truth = [](const Aggregate& a, double v) { return a.count > 0 && a.has_truth ? format_double(v) : std::string(); };
    line("MSE", [&](const Aggregate& a) { return if_truth(a, a.mse); });
    line("#FPs", [&](const Aggregate& a) { return if_truth(a, a.fp); });
    line("#FNs", [&](const Aggregate& a) { return if_truth(a, a.fn); });
    line("pred_MSE", [&](const Aggregate& a) { return a.pred_mse ? format_double(*a.pred_mse) : std::string(); });
    line("Time_ms", [&](const Aggregate& a) { return a.count > 0 ? format_double(a.runtime_ms) : std::string(); });
    return out;
}

/// Drops every `*_ms` column; used to compare runs across thread counts.
inline std::string strip_timing_columns(const std::string& csv)
{
    std::istringstream in(csv);
    std::string line;
    std::string out;
    std::vector<bool> keep;
    auto split = [](const std::string& l) {
        std::vector<std::string> cells;
        std::string cell;
        bool quoted = false;
        for (char c : l) {
            if (c == '"') quoted = !quoted;
            if (c == ',' && !quoted) {
                cells.push_back(cell);
                cell.clear();
            } else {
                cell += c;
            }
        }
        cells.push_back(cell);
        return cells;
    };
    bool first = true;
    while (std::getline(in, line)) {
        auto cells = split(line);
        if (first) {
            for (const auto& c : cells) keep.push_back(!is_timing_column(c));
            first = false;
        }
        bool any = false;
        for (std::size_t k = 0; k < cells.size(); ++k) {
            if (k < keep.size() && !keep[k]) continue;
            out += (any ? "," : "") + cells[k];
            any = true;
        }
        out += '\n';
    }
    return out;
}

} // namespace deco::experiment
