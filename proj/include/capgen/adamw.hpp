#pragma once

#include <vector>

#include "capgen/params.hpp"

namespace capgen {

struct AdamWConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.01;
};

// sqrt(sum of squared gradients) over every parameter that has a gradient.
double global_grad_norm(const ParamMap& params);

// Scales all gradients by max_norm / norm when norm exceeds max_norm.
void clip_grad_norm(ParamMap& params, double max_norm);

// Decoupled weight decay: theta -= lr * mhat / (sqrt(vhat) + eps) + lr * wd * theta.
// Parameters with requires_grad == false are skipped entirely. State is keyed
// by position in the ParamMap, so the map layout must not change across steps.
class AdamW {
 public:
  explicit AdamW(AdamWConfig cfg) : cfg_(cfg) {}

  void step(ParamMap& params);

  const AdamWConfig& config() const { return cfg_; }
  std::size_t steps_taken() const { return t_; }

 private:
  struct Slot {
    std::vector<double> m, v;
  };
  AdamWConfig cfg_;
  std::vector<Slot> state_;
  std::size_t t_ = 0;
};

}  // namespace capgen
