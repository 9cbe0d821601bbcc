#pragma once

#include "stscq/codebook.hpp"
#include "stscq/metrics.hpp"
#include "stscq/trainer.hpp"

#include "json.hpp"

#include <cmath>
#include <map>
#include <string>
#include <vector>

namespace stscq {

inline nlohmann::json to_json(const UtilizationStats& s)
{
    return {{"per_token_rates", s.per_token_rates}, {"min", s.min}, {"max", s.max}, {"mean", s.mean}, {"std", s.std}};
}

/// `include_timing` false drops the wall-clock field, leaving only values that
/// are reproducible from the seed.
inline nlohmann::json to_json(const StageReport& r, bool include_timing = true)
{
    nlohmann::json j = {
        {"stage", r.stage},
        {"steps", r.steps},
        {"loss_curve", r.loss_curve},
        {"quant_curve", r.quant_curve},
        {"initial_error", r.initial_error},
        {"final_error", r.final_error},
        {"utilization", to_json(r.utilization)},
        {"routing_histogram", r.routing_histogram},
        {"reseeded_codes", r.reseeded_codes},
    };
    if (r.stage == 3) {
        j["initial_pixel_mse"] = r.initial_pixel_mse;
        j["final_pixel_mse"] = r.final_pixel_mse;
    }
    if (include_timing)
        j["wall_clock_seconds"] = r.wall_clock_seconds;
    return j;
}

inline nlohmann::json to_json(const TrainConfig& c)
{
    return {{"M", c.M},
            {"K", c.K},
            {"T", c.T},
            {"d", c.d},
            {"s", c.s},
            {"lambda1", c.lambda1},
            {"lambda2", c.lambda2},
            {"learning_rate", c.learning_rate},
            {"batch_size", c.batch_size},
            {"steps_stage1", c.steps_stage1},
            {"steps_stage2", c.steps_stage2},
            {"steps_stage3", c.steps_stage3},
            {"seed", c.seed},
            {"dead_code_epochs", c.dead_code_epochs},
            {"router_hidden", c.router_hidden},
            {"commitment_weight", c.commitment_weight},
            {"log_interval", c.log_interval}};
}

/// Checks the structural contract of a stage report: required keys with the
/// right types, finite curves, and a histogram that sums to `sample_count`.
inline std::vector<std::string> validate_report(const nlohmann::json& j, std::uint64_t sample_count)
{
    std::vector<std::string> problems;
    auto need = [&](const char* key, bool ok) {
        if (!j.contains(key))
            problems.push_back(std::string("missing ") + key);
        else if (!ok)
            problems.push_back(std::string("bad type for ") + key);
    };
    need("stage", j.contains("stage") && j["stage"].is_number_integer());
    need("steps", j.contains("steps") && j["steps"].is_number_integer());
    need("loss_curve", j.contains("loss_curve") && j["loss_curve"].is_array());
    need("utilization", j.contains("utilization") && j["utilization"].is_object());
    need("routing_histogram", j.contains("routing_histogram") && j["routing_histogram"].is_array());
    if (!problems.empty())
        return problems;
    for (const auto& v : j["loss_curve"])
        if (!v.is_number() || !std::isfinite(v.get<double>()))
            problems.push_back("non-finite loss curve entry");
    if (j["stage"].get<int>() != 3) {
        std::uint64_t total = 0;
        for (const auto& c : j["routing_histogram"])
            total += c.get<std::uint64_t>();
        if (total != sample_count)
            problems.push_back("routing histogram sums to " + std::to_string(total) + ", expected " +
                               std::to_string(sample_count));
    }
    return problems;
}

inline nlohmann::json to_json(const std::map<int, RoutingHistogram>& hists)
{
    nlohmann::json arr = nlohmann::json::array();
    for (const auto& [label, h] : hists) {
        nlohmann::json e = {{"counts", h.counts}, {"total", h.total()}, {"entropy", h.entropy()}};
        e["label"] = label == kNoLabel ? nlohmann::json(nullptr) : nlohmann::json(label);
        arr.push_back(std::move(e));
    }
    return arr;
}

} // namespace stscq
