#pragma once

#include <string>
#include <vector>

namespace atdt::selftest {

struct CheckResult {
  std::string name;
  bool pass = false;
  std::string detail;
};

struct Options {
  // Test hook: names a kernel to perturb so the corresponding check must
  // fail ("miou", "depth_metrics", "conv_grad"). Empty = no fault.
  std::string inject_fault;
};

struct Report {
  std::vector<CheckResult> checks;
  bool all_pass() const {
    for (const auto& c : checks)
      if (!c.pass) return false;
    return true;
  }
};

// Gradient checks for every differentiable op, metric kernels against
// brute-force oracles, scene-generator invariants, checkpoint round-trip.
// Deterministic; designed to finish well under a minute.
Report run(const Options& options = {});

}  // namespace atdt::selftest
