#pragma once

#include <vector>

#include "atdt/tensor/param.hpp"

namespace atdt {

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// Per-parameter Adam state. step counts completed updates.
struct AdamState {
  int64_t step = 0;
  std::vector<double> m, v;
};

// Standard Adam with bias correction. Parameters without a populated grad
// are treated as zero-gradient (m/v decay, value still nudged by stale
// momentum only if any exists); a NaN or Inf gradient aborts with the
// parameter path in the message.
class Adam {
 public:
  Adam(std::vector<Parameter*> params, AdamConfig cfg);

  void step();
  void zero_grad();

  const AdamState& state(size_t i) const { return states_[i]; }
  const AdamConfig& config() const { return cfg_; }

 private:
  std::vector<Parameter*> params_;
  std::vector<AdamState> states_;
  AdamConfig cfg_;
};

}  // namespace atdt
