#include "capgen/adamw.hpp"

#include <cmath>

namespace capgen {

double global_grad_norm(const ParamMap& params) {
  double sq = 0.0;
  for (const auto& [name, t] : params.items()) {
    if (!t.requires_grad() || !t.has_grad()) continue;
    for (double g : t.grad()) sq += g * g;
  }
  return std::sqrt(sq);
}

void clip_grad_norm(ParamMap& params, double max_norm) {
  if (max_norm <= 0.0) throw ConfigError("clip_grad_norm: max_norm must be positive");
  double norm = global_grad_norm(params);
  if (norm <= max_norm) return;
  double s = max_norm / norm;
  for (auto& [name, t] : params.items()) {
    if (!t.requires_grad() || !t.has_grad()) continue;
    for (double& g : t.grad_buf()) g *= s;
  }
}

void AdamW::step(ParamMap& params) {
  if (state_.empty()) {
    state_.resize(params.size());
  } else if (state_.size() != params.size()) {
    throw ContractError("AdamW: parameter count changed between steps");
  }
  ++t_;
  double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
  double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));

  for (std::size_t i = 0; i < params.size(); ++i) {
    auto& [name, p] = params.items()[i];
    if (!p.requires_grad()) continue;
    Slot& s = state_[i];
    if (s.m.empty()) {
      s.m.assign(p.size(), 0.0);
      s.v.assign(p.size(), 0.0);
    }
    const std::vector<double>& g = p.grad_buf();  // zeros when never touched
    for (std::size_t j = 0; j < p.size(); ++j) {
      if (!std::isfinite(g[j])) {
        throw NumericError("non-finite gradient in parameter '" + name + "'");
      }
      s.m[j] = cfg_.beta1 * s.m[j] + (1.0 - cfg_.beta1) * g[j];
      s.v[j] = cfg_.beta2 * s.v[j] + (1.0 - cfg_.beta2) * g[j] * g[j];
      double mhat = s.m[j] / bc1;
      double vhat = s.v[j] / bc2;
      // Decoupled decay reads the pre-update value.
      double theta = p.data()[j];
      p.data()[j] = theta - cfg_.lr * mhat / (std::sqrt(vhat) + cfg_.eps) -
                    cfg_.lr * cfg_.weight_decay * theta;
    }
  }
}

}  // namespace capgen
