// deco: generate synthetic data, run the benchmark harness, inspect designs.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "deco/datagen.hpp"
#include "deco/deco.hpp"
#include "deco/eval.hpp"
#include "deco/experiment.hpp"
#include "deco/parallel.hpp"
#include "deco/serialize.hpp"
#include "deco/version.hpp"

namespace {

enum Exit { ok = 0, config_error = 1, runtime_failure = 2, partial_failure = 3 };

bool is_config_error(deco::ErrorCode c)
{
    using deco::ErrorCode;
    return c == ErrorCode::invalid_config || c == ErrorCode::invalid_spec || c == ErrorCode::invalid_m ||
           c == ErrorCode::parse;
}

void write_text(const std::string& path, const std::string& text)
{
    std::ofstream out(path, std::ios::binary);
    if (!out) throw deco::Error(deco::ErrorCode::io, "cannot open '" + path + "' for writing");
    out << text;
    if (!out) throw deco::Error(deco::ErrorCode::io, "write failed for '" + path + "'");
}

std::string sibling(const std::string& path, const std::string& suffix)
{
    std::filesystem::path p(path);
    std::filesystem::path out = p.parent_path() / (p.stem().string() + suffix);
    return out.string();
}

struct Common
{
    std::string config;
    std::optional<std::uint64_t> seed;
    long threads = 0;
    std::string out;
};

deco::experiment::ExperimentConfig load_experiment(const Common& c)
{
    nlohmann::json j = c.config.empty() ? nlohmann::json::object() : deco::experiment::load_config_file(c.config);
    auto cfg = deco::experiment::parse_experiment(j);
    if (c.seed) {
        cfg.seed = *c.seed;
        if (cfg.model) cfg.model->seed = *c.seed;
    }
    if (!c.out.empty()) cfg.output = c.out;
    return cfg;
}

int cmd_gen(const Common& c)
{
    auto cfg = load_experiment(c);
    if (!cfg.model) throw deco::Error(deco::ErrorCode::invalid_config, "gen needs model.* keys");
    const std::string out = c.out.empty() ? std::string("data.csv") : c.out;
    deco::Dataset d = deco::generate(*cfg.model);
    deco::export_csv(d, out);

    nlohmann::json meta;
    meta["model"] = deco::to_json(*cfg.model);
    meta["seed"] = cfg.model->seed;
    meta["sigma"] = d.sigma;
    meta["beta_true"] = deco::to_std(*d.beta_true);
    if (d.support) meta["support"] = *d.support;
    write_text(out + ".meta.json", meta.dump(2) + "\n");
    std::cerr << "wrote " << out << " (" << d.n() << " x " << d.p() << ")\n";
    return ok;
}

int cmd_fit(const Common& c)
{
    auto cfg = load_experiment(c);
    const std::size_t threads = deco::resolve_threads(c.threads);
    auto res = deco::experiment::run_experiment(cfg, threads);
    write_text(cfg.output, deco::experiment::results_csv(res));
    write_text(sibling(cfg.output, "_table.csv"), deco::experiment::summary_table_csv(res));
    std::cout << deco::experiment::summary_table_csv(res);

    const auto total = static_cast<int>(res.rows.size());
    if (res.failed_rows == 0) return ok;
    std::cerr << res.failed_rows << " of " << total << " runs failed; see the error column\n";
    return res.failed_rows == total ? runtime_failure : partial_failure;
}

int cmd_diag(const Common& c, long sample_pairs)
{
    auto cfg = load_experiment(c);
    deco::Dataset data = cfg.model ? deco::generate(*cfg.model)
                                   : deco::experiment::import_csv(cfg.csv_path, cfg.response);
    deco::DecoConfig dc = cfg.deco;
    dc.threads = deco::resolve_threads(c.threads);
    deco::Stage1 s1 = deco::run_stage1(data, dc);

    const deco::Index p = data.p();
    deco::Matrix decorrelated(data.n(), p);
    for (std::size_t g = 0; g < s1.partition.m(); ++g) {
        const auto& grp = s1.partition.groups[g];
        for (std::size_t k = 0; k < grp.size(); ++k) {
            decorrelated.col(grp[k]) = s1.blocks_tilde[g].col(static_cast<deco::Index>(k));
        }
    }

    std::optional<deco::Vector> w_raw;
    std::optional<deco::Vector> w_tilde;
    if (data.beta_true) {
        deco::Vector w = data.y - data.X * *data.beta_true;
        w.array() -= w.mean();
        w_raw = w;
        w_tilde = s1.transform ? deco::Vector(*s1.transform * w) : w;
    }
    deco::eval::DiagnosticsOptions opts;
    opts.sample_pairs = sample_pairs;
    opts.seed = dc.seed;

    nlohmann::json j;
    j["n"] = data.n();
    j["p"] = p;
    j["m"] = dc.m;
    j["r1"] = dc.r1_value();
    j["mode"] = deco::to_string(dc.mode);
    j["raw"] = deco::to_json(deco::eval::design_diagnostics(s1.cs.x, w_raw, opts));
    j["decorrelated"] = deco::to_json(deco::eval::design_diagnostics(decorrelated, w_tilde, opts));
    j["stage_times_ms"] = deco::to_json(s1.times);
    const std::string text = j.dump(2) + "\n";
    if (c.out.empty()) {
        std::cout << text;
    } else {
        write_text(c.out, text);
    }
    return ok;
}

void add_common(CLI::App* app, Common& c, bool with_threads)
{
    app->add_option("--config", c.config, "Experiment config (key = value or JSON)");
    app->add_option("--seed", c.seed, "Override the config seed");
    app->add_option("--out", c.out, "Output path");
    if (with_threads) {
        app->add_option("--threads", c.threads, "Worker threads (speed only; falls back to DECO_THREADS)");
    }
}

} // namespace

int main(int argc, char** argv)
{
    CLI::App app{"Decorrelated feature-partitioned sparse regression"};
    app.require_subcommand(1);

    Common gen_opts;
    Common fit_opts;
    Common diag_opts;
    long sample_pairs = 0;
    auto* gen = app.add_subcommand("gen", "Generate a synthetic dataset as CSV plus a metadata sidecar");
    add_common(gen, gen_opts, false);
    auto* fit = app.add_subcommand("fit", "Run the replication harness and write result tables");
    add_common(fit, fit_opts, true);
    auto* diag = app.add_subcommand("diag", "Stage-1 only: raw vs decorrelated design diagnostics");
    add_common(diag, diag_opts, true);
    diag->add_option("--sample-pairs", sample_pairs, "Examine this many random column pairs instead of all");
    auto* ver = app.add_subcommand("version", "Print the version");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? ok : config_error;
    }

    try {
        if (*ver) {
            std::cout << "deco " << deco::version << "\n";
            return ok;
        }
        if (*gen) return cmd_gen(gen_opts);
        if (*fit) return cmd_fit(fit_opts);
        if (*diag) return cmd_diag(diag_opts, sample_pairs);
    } catch (const deco::Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return is_config_error(e.code()) ? config_error : runtime_failure;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return runtime_failure;
    }
    return ok;
}
