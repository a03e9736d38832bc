#include "atdt/tensor/adam.hpp"

#include <cmath>

#include "atdt/common/error.hpp"

namespace atdt {

Adam::Adam(std::vector<Parameter*> params, AdamConfig cfg)
    : params_(std::move(params)), cfg_(cfg) {
  states_.resize(params_.size());
  for (size_t i = 0; i < params_.size(); ++i) {
    const size_t n = params_[i]->value.data().size();
    states_[i].m.assign(n, 0.0);
    states_[i].v.assign(n, 0.0);
  }
}

void Adam::step() {
  // Validate every gradient before touching any parameter, so an abort
  // leaves the parameters exactly as they were.
  for (Parameter* p : params_) {
    if (!p->value.has_grad()) continue;
    for (double g : p->value.grad())
      if (!std::isfinite(g))
        throw TrainingAborted("non-finite gradient in parameter '" + p->name + "'", "");
  }
  for (size_t i = 0; i < params_.size(); ++i) {
    Parameter& p = *params_[i];
    AdamState& st = states_[i];
    st.step += 1;
    const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(st.step));
    const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(st.step));
    auto& val = p.value.mutable_data();
    const bool has_grad = p.value.has_grad();
    const std::vector<double>* grad = has_grad ? &p.value.grad() : nullptr;
    for (size_t j = 0; j < val.size(); ++j) {
      const double g = has_grad ? (*grad)[j] : 0.0;
      st.m[j] = cfg_.beta1 * st.m[j] + (1.0 - cfg_.beta1) * g;
      st.v[j] = cfg_.beta2 * st.v[j] + (1.0 - cfg_.beta2) * g * g;
      const double mhat = st.m[j] / bc1;
      const double vhat = st.v[j] / bc2;
      val[j] -= cfg_.lr * mhat / (std::sqrt(vhat) + cfg_.eps);
    }
  }
}

void Adam::zero_grad() {
  for (Parameter* p : params_) p->value.zero_grad();
}

}  // namespace atdt
