#include "atdt/atdt.h"

#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <string>

#include <json.hpp>

#include "atdt/common/error.hpp"
#include "atdt/config/config_json.hpp"
#include "atdt/pipeline/pipeline.hpp"
#include "atdt/pipeline/report.hpp"
#include "atdt/scenegen/dataset.hpp"
#include "atdt/selftest/selftest.hpp"

using atdt::ConfigError;
using atdt::IoError;

struct atdt_config {
  atdt::pipeline::ExperimentPlan plan;
};

namespace {

thread_local std::string t_last_error = "";

atdt_status fail(atdt_status code, const std::string& message) {
  t_last_error = message;
  return code;
}

template <typename Fn>
atdt_status guarded(Fn&& fn) {
  try {
    return fn();
  } catch (const ConfigError& e) {
    return fail(ATDT_ERR_CONFIG, e.what());
  } catch (const IoError& e) {
    return fail(ATDT_ERR_IO, e.what());
  } catch (const std::exception& e) {
    return fail(ATDT_ERR_RUN, e.what());
  }
}

}  // namespace

extern "C" {

const char* atdt_version(void) { return "0.1.0"; }

const char* atdt_last_error(void) { return t_last_error.c_str(); }

atdt_status atdt_config_default(atdt_config** out) {
  if (!out) return fail(ATDT_ERR_CONFIG, "null output pointer");
  return guarded([&] {
    auto* cfg = new atdt_config();
    cfg->plan = atdt::config::plan_from_json(nlohmann::json::object());
    *out = cfg;
    return ATDT_OK;
  });
}

atdt_status atdt_config_load(const char* path, atdt_config** out) {
  if (!out || !path) return fail(ATDT_ERR_CONFIG, "null argument");
  return guarded([&] {
    auto* cfg = new atdt_config();
    try {
      cfg->plan = atdt::config::load_plan_file(path);
    } catch (...) {
      delete cfg;
      throw;
    }
    *out = cfg;
    return ATDT_OK;
  });
}

atdt_status atdt_config_parse(const char* json_text, atdt_config** out) {
  if (!out || !json_text) return fail(ATDT_ERR_CONFIG, "null argument");
  return guarded([&] {
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(json_text);
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError(std::string("config parse error: ") + e.what());
    }
    auto* cfg = new atdt_config();
    try {
      cfg->plan = atdt::config::plan_from_json(j);
    } catch (...) {
      delete cfg;
      throw;
    }
    *out = cfg;
    return ATDT_OK;
  });
}

atdt_status atdt_config_set(atdt_config* config, const char* dotted_key, const char* json_value) {
  if (!config || !dotted_key || !json_value) return fail(ATDT_ERR_CONFIG, "null argument");
  return guarded([&] {
    nlohmann::json value;
    try {
      value = nlohmann::json::parse(json_value);
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError(std::string("override value parse error: ") + e.what());
    }
    // Rebuild the JSON, patch the path, re-parse strictly.
    nlohmann::json doc = atdt::config::plan_to_json(config->plan);
    nlohmann::json* node = &doc;
    std::string key(dotted_key);
    size_t pos;
    while ((pos = key.find('.')) != std::string::npos) {
      node = &(*node)[key.substr(0, pos)];
      key = key.substr(pos + 1);
    }
    (*node)[key] = value;
    config->plan = atdt::config::plan_from_json(doc);
    return ATDT_OK;
  });
}

atdt_status atdt_config_dump(const atdt_config* config, char** out_json) {
  if (!config || !out_json) return fail(ATDT_ERR_CONFIG, "null argument");
  return guarded([&] {
    const std::string text = atdt::config::plan_to_json(config->plan).dump(2);
    char* buf = static_cast<char*>(std::malloc(text.size() + 1));
    std::memcpy(buf, text.c_str(), text.size() + 1);
    *out_json = buf;
    return ATDT_OK;
  });
}

void atdt_config_destroy(atdt_config* config) { delete config; }

atdt_status atdt_gen_data(const atdt_config* config, const char* out_dir) {
  if (!config || !out_dir) return fail(ATDT_ERR_CONFIG, "null argument");
  return guarded([&] {
    const auto& plan = config->plan;
    const auto data =
        atdt::scenegen::build_dataset(plan.dataset, atdt::derive_seed(plan.master_seed, "gen_data"));
    atdt::scenegen::write_dataset(data, plan.dataset, plan.master_seed, out_dir);
    return ATDT_OK;
  });
}

atdt_status atdt_run(const atdt_config* config, const char* out_root) {
  if (!config || !out_root) return fail(ATDT_ERR_CONFIG, "null argument");
  return guarded([&] {
    const auto result = atdt::pipeline::run_experiment(config->plan, out_root);
    for (const auto& seed : result.seeds) {
      if (!seed.failures.empty()) {
        std::string msg = "failures in seed " + std::to_string(seed.seed) + ":";
        for (const auto& f : seed.failures) msg += " [" + f + "]";
        return fail(ATDT_ERR_RUN, msg);
      }
    }
    return ATDT_OK;
  });
}

atdt_status atdt_report(const char* const* run_dirs, size_t n_dirs, const char* out_dir) {
  if (!run_dirs || !out_dir) return fail(ATDT_ERR_CONFIG, "null argument");
  return guarded([&] {
    std::vector<std::string> dirs(run_dirs, run_dirs + n_dirs);
    const auto warnings = atdt::pipeline::write_report(dirs, out_dir);
    for (const auto& w : warnings) std::fprintf(stderr, "warning: %s\n", w.c_str());
    return ATDT_OK;
  });
}

atdt_status atdt_selftest(int verbose) {
  return guarded([&] {
    atdt::selftest::Options options;
    if (const char* fault = std::getenv("ATDT_SELFTEST_FAULT")) options.inject_fault = fault;
    const auto report = atdt::selftest::run(options);
    for (const auto& c : report.checks) {
      if (verbose)
        std::printf("%-32s %s%s%s\n", c.name.c_str(), c.pass ? "pass" : "FAIL",
                    c.detail.empty() ? "" : "  ", c.detail.c_str());
    }
    if (!report.all_pass()) return fail(ATDT_ERR_RUN, "selftest failed");
    return ATDT_OK;
  });
}

void atdt_string_free(char* s) { std::free(s); }

}  // extern "C"
