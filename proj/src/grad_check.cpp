#include "capgen/grad_check.hpp"

#include <cmath>
#include <utility>

namespace capgen {

GradCheckReport grad_check(const std::function<Tensor()>& f, std::vector<Tensor> inputs, double h,
                           std::size_t max_probes, Rng& rng) {
  if (h <= 0.0) throw ContractError("grad_check: step h must be > 0");

  for (Tensor& t : inputs) {
    t.set_requires_grad(true);
    t.zero_grad();
  }
  std::vector<std::vector<double>> analytic;
  {
    Tape tape;
    TapeScope scope(tape);
    Tensor loss = f();
    tape.backward(loss);
  }
  for (Tensor& t : inputs) {
    analytic.push_back(t.has_grad() ? t.grad() : std::vector<double>(t.size(), 0.0));
    t.zero_grad();
  }

  std::vector<std::pair<std::size_t, std::size_t>> probes;
  std::size_t total = 0;
  for (const Tensor& t : inputs) total += t.size();
  if (total <= max_probes) {
    for (std::size_t i = 0; i < inputs.size(); ++i)
      for (std::size_t j = 0; j < inputs[i].size(); ++j) probes.emplace_back(i, j);
  } else {
    for (std::size_t p = 0; p < max_probes; ++p) {
      std::size_t flat = rng.below(total);
      std::size_t i = 0;
      while (flat >= inputs[i].size()) flat -= inputs[i++].size();
      probes.emplace_back(i, flat);
    }
  }

  GradCheckReport rep;
  for (auto [i, j] : probes) {
    double* slot = inputs[i].data() + j;
    double saved = *slot;
    *slot = saved + h;
    double lp = f().item();
    *slot = saved - h;
    double lm = f().item();
    *slot = saved;
    double numeric = (lp - lm) / (2.0 * h);
    double ana = analytic[i][j];
    double rel = std::fabs(numeric - ana) / std::max(1.0, std::fabs(ana));
    if (rel > rep.max_rel_err) {
      rep.max_rel_err = rel;
      rep.worst = "input " + std::to_string(i) + " elem " + std::to_string(j) + ": analytic " +
                  std::to_string(ana) + " numeric " + std::to_string(numeric);
    }
    ++rep.checked;
  }
  return rep;
}

}  // namespace capgen
