#pragma once

#include <json.hpp>

#include "atdt/pipeline/pipeline.hpp"

namespace atdt::pipeline {

nlohmann::ordered_json eval_result_to_json(const EvalResult& r);
EvalResult eval_result_from_json(const nlohmann::json& j);

nlohmann::ordered_json method_result_to_json(const MethodResult& m);
MethodResult method_result_from_json(const nlohmann::json& j);

// The full per-seed metrics.json document.
nlohmann::ordered_json seed_result_to_json(const SeedResult& s, const ExperimentPlan& plan);
SeedResult seed_result_from_json(const nlohmann::json& j);

}  // namespace atdt::pipeline
