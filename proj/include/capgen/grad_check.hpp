#pragma once

#include <functional>
#include <string>
#include <vector>

#include "capgen/rng.hpp"
#include "capgen/tensor.hpp"

namespace capgen {

struct GradCheckReport {
  double max_rel_err = 0.0;
  std::size_t checked = 0;
  std::string worst;

  bool passed(double tol) const { return checked > 0 && max_rel_err < tol; }
};

// Central finite differences against the tape gradient. f must rebuild the
// forward pass from the current contents of `inputs` on every call. When the
// total element count exceeds max_probes, probes are sampled with rng.
GradCheckReport grad_check(const std::function<Tensor()>& f, std::vector<Tensor> inputs, double h,
                           std::size_t max_probes, Rng& rng);

}  // namespace capgen
