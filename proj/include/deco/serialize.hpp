#pragma once

#include <string>
#include <vector>

#include <json.hpp>

#include "deco/datagen.hpp"
#include "deco/deco.hpp"
#include "deco/eval.hpp"

namespace deco {

inline std::vector<double> to_std(const Vector& v)
{
    return std::vector<double>(v.data(), v.data() + v.size());
}

inline nlohmann::json to_json(const StageTimes& t)
{
    return {{"gram", t.gram},
            {"eig", t.eig},
            {"decorrelate", t.decorrelate},
            {"worker_fit", t.worker_fit},
            {"merge", t.merge},
            {"refine", t.refine}};
}

inline nlohmann::json to_json(const WorkerReport& w)
{
    return {{"worker", w.worker},
            {"columns", w.columns},
            {"lambda", w.lambda},
            {"support_size", w.support_size},
            {"kkt_max_violation", w.kkt_max_violation},
            {"fit_ms", w.fit_ms}};
}

/// Field names beta, intercept, support, stage_times_ms and worker_reports
/// are fixed; runtime_ms and refine are extras.
inline nlohmann::json to_json(const FitResult& r)
{
    nlohmann::json j;
    j["beta"] = to_std(r.beta);
    j["intercept"] = r.intercept;
    j["support"] = r.support;
    j["stage_times_ms"] = to_json(r.stage_times);
    auto workers = nlohmann::json::array();
    for (const auto& w : r.worker_reports) workers.push_back(to_json(w));
    j["worker_reports"] = std::move(workers);
    j["runtime_ms"] = r.runtime_ms;
    if (r.refine_report) {
        j["refine"] = {{"sparsified", r.refine_report->sparsified},
                       {"empty_support", r.refine_report->empty_support},
                       {"r2", r.refine_report->r2},
                       {"cv_mse", r.refine_report->cv_mse}};
    }
    return j;
}

inline nlohmann::json to_json(const eval::Metrics& m)
{
    nlohmann::json j{{"mse", m.mse}, {"fp", m.fp}, {"fn", m.fn}, {"sign_consistent", m.sign_consistent}};
    j["pred_mse"] = m.pred_mse ? nlohmann::json(*m.pred_mse) : nlohmann::json(nullptr);
    return j;
}

inline nlohmann::json to_json(const eval::DiagnosticsReport& d)
{
    nlohmann::json j{{"min_diag", d.min_diag},   {"max_diag", d.max_diag}, {"max_offdiag", d.max_offdiag},
                     {"n", d.n},                 {"p", d.p},               {"sampled", d.sampled},
                     {"pairs_examined", d.pairs_examined}};
    j["noise_corr"] = d.noise_corr ? nlohmann::json(*d.noise_corr) : nlohmann::json(nullptr);
    return j;
}

inline nlohmann::json to_json(const ModelSpec& s)
{
    return {{"kind", to_string(s.kind)}, {"n", s.n},
            {"p", s.p},                  {"rho", s.rho},
            {"n_factors", s.n_factors},  {"group_noise_sd", s.group_noise_sd},
            {"target_r2", s.target_r2},  {"seed", s.seed}};
}

} // namespace deco
