// atdt: dataset generation, experiment execution, reporting and self-test
// for the toy cross-task/cross-domain transfer benchmark. Talks to the
// library exclusively through the C API.
#include <cstdio>
#include <cstdlib>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "atdt/atdt.h"

namespace {

// Exit codes: 0 success, 1 run failure, 2 config error (stable contract).
int exit_code(atdt_status status) {
  switch (status) {
    case ATDT_OK:
      return 0;
    case ATDT_ERR_CONFIG:
      return 2;
    default:
      return 1;
  }
}

int fail_with(atdt_status status) {
  std::fprintf(stderr, "error: %s\n", atdt_last_error());
  return exit_code(status);
}

struct ConfigHandle {
  atdt_config* cfg = nullptr;
  ~ConfigHandle() { atdt_config_destroy(cfg); }
};

// Loads --config (or defaults), applies ATDT_SEED and flag overrides.
int build_config(const std::string& config_path, const std::vector<std::string>& overrides,
                 ConfigHandle& out) {
  atdt_status st = config_path.empty() ? atdt_config_default(&out.cfg)
                                       : atdt_config_load(config_path.c_str(), &out.cfg);
  if (st != ATDT_OK) return fail_with(st);
  if (const char* env_seed = std::getenv("ATDT_SEED")) {
    if ((st = atdt_config_set(out.cfg, "master_seed", env_seed)) != ATDT_OK) return fail_with(st);
  }
  for (const auto& kv : overrides) {
    const size_t eq = kv.find('=');
    if (eq == std::string::npos) {
      std::fprintf(stderr, "error: override '%s' is not key=json\n", kv.c_str());
      return 2;
    }
    st = atdt_config_set(out.cfg, kv.substr(0, eq).c_str(), kv.substr(eq + 1).c_str());
    if (st != ATDT_OK) return fail_with(st);
  }
  return -1;  // continue
}

std::string json_quote(const std::string& s) { return "\"" + s + "\""; }

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"AT/DT toy benchmark: cross-task knowledge transfer across domains"};
  app.require_subcommand(1);

  std::string config_path, out_dir, direction, methods;
  std::vector<std::string> overrides, run_dirs;
  int seeds = 0, split_level = 0, jobs = 0;
  bool no_batchnorm = false, no_shared_encoder = false, proxy_labels = false, paired = false;
  bool quiet = false;

  auto add_config_flags = [&](CLI::App* cmd) {
    cmd->add_option("--config", config_path, "JSON config file or run manifest");
    cmd->add_option("--set", overrides, "override config fields, key=json (repeatable)");
  };

  auto* gen = app.add_subcommand("gen-data", "render the paired-domain datasets to disk");
  add_config_flags(gen);
  gen->add_option("--out", out_dir, "output directory")->required();
  gen->add_flag("--paired", paired, "A and B share scene seeds (debug mode)");

  auto* run = app.add_subcommand("run", "execute the configured experiment methods");
  add_config_flags(run);
  run->add_option("--out", out_dir, "run output root (default: runs)");
  run->add_option("--methods", methods,
                  "comma list: atdt,baseline,oracle,multitask,ablate-level,ablate-shared,"
                  "ablate-bn");
  run->add_option("--direction", direction, "dep2sem or sem2dep");
  run->add_option("--seeds", seeds, "number of seeds (derived from the master seed)");
  run->add_option("--split-level", split_level, "encoder split level 1..4");
  run->add_option("--jobs", jobs, "parallel seed workers");
  run->add_flag("--no-batchnorm", no_batchnorm, "disable batch normalization everywhere");
  run->add_flag("--no-shared-encoder", no_shared_encoder, "train per-domain N1 networks");
  run->add_flag("--proxy-labels", proxy_labels, "noisy proxy depth supervision on B");
  run->add_flag("--paired", paired, "A and B share scene seeds (debug mode)");

  auto* report = app.add_subcommand("report", "collate run directories into tables");
  report->add_option("--runs", run_dirs, "run directories (runs/<name>)")->required();
  report->add_option("--out", out_dir, "report output directory (default: report)");

  auto* selftest = app.add_subcommand("selftest", "gradient/metric/generator self-checks");
  selftest->add_flag("--quiet", quiet, "suppress per-check output");

  CLI11_PARSE(app, argc, argv);

  if (gen->parsed()) {
    if (paired) overrides.push_back("dataset.paired=true");
    ConfigHandle cfg;
    const int rc = build_config(config_path, overrides, cfg);
    if (rc >= 0) return rc;
    const atdt_status st = atdt_gen_data(cfg.cfg, out_dir.c_str());
    if (st != ATDT_OK) return fail_with(st);
    std::printf("dataset written to %s\n", out_dir.c_str());
    return 0;
  }

  if (run->parsed()) {
    if (!direction.empty()) overrides.push_back("plan.direction=" + json_quote(direction));
    if (seeds > 0) overrides.push_back("plan.seeds=" + std::to_string(seeds));
    if (split_level > 0) overrides.push_back("plan.split_level=" + std::to_string(split_level));
    if (jobs > 0) overrides.push_back("plan.jobs=" + std::to_string(jobs));
    if (no_batchnorm) overrides.push_back("plan.use_batchnorm=false");
    if (no_shared_encoder) overrides.push_back("plan.shared_encoder=false");
    if (proxy_labels) overrides.push_back("plan.proxy_labels_on_b=true");
    if (paired) overrides.push_back("dataset.paired=true");
    if (!methods.empty()) {
      std::string arr = "[";
      std::string rest = methods;
      bool first = true;
      while (!rest.empty()) {
        const size_t comma = rest.find(',');
        arr += (first ? "" : ",") + json_quote(rest.substr(0, comma));
        first = false;
        if (comma == std::string::npos) break;
        rest = rest.substr(comma + 1);
      }
      overrides.push_back("plan.methods=" + arr + "]");
    }
    ConfigHandle cfg;
    const int rc = build_config(config_path, overrides, cfg);
    if (rc >= 0) return rc;
    const atdt_status st = atdt_run(cfg.cfg, out_dir.empty() ? "runs" : out_dir.c_str());
    if (st != ATDT_OK) return fail_with(st);
    std::printf("run complete\n");
    return 0;
  }

  if (report->parsed()) {
    std::vector<const char*> dirs;
    dirs.reserve(run_dirs.size());
    for (const auto& d : run_dirs) dirs.push_back(d.c_str());
    const atdt_status st =
        atdt_report(dirs.data(), dirs.size(), out_dir.empty() ? "report" : out_dir.c_str());
    if (st != ATDT_OK) return fail_with(st);
    std::printf("report written\n");
    return 0;
  }

  if (selftest->parsed()) {
    const atdt_status st = atdt_selftest(quiet ? 0 : 1);
    if (st != ATDT_OK) return fail_with(st);
    std::printf("selftest: all checks passed\n");
    return 0;
  }

  return 2;
}
