#pragma once

#include <string>

#include <json.hpp>

#include "atdt/pipeline/pipeline.hpp"

namespace atdt::config {

// Strict schema: unknown keys anywhere raise ConfigError. Every field has a
// default (the struct initializers), so {} is a valid config.
pipeline::ExperimentPlan plan_from_json(const nlohmann::json& j);

// Fully-resolved echo (explicit seed list, every default filled in).
// plan_from_json(plan_to_json(p)) == p.
nlohmann::ordered_json plan_to_json(const pipeline::ExperimentPlan& plan);

// Reads a config file or a run manifest (a manifest wraps the resolved
// config under "config" and pins "seed").
pipeline::ExperimentPlan load_plan_file(const std::string& path);

// Applied before seed resolution; "seeds": N derives N seeds from
// master_seed, "seeds": [..] is explicit.
}  // namespace atdt::config
