#include "capgen/regional.hpp"

#include <cmath>

namespace capgen {

RegionalMode regional_mode_from_string(const std::string& s) {
  if (s == "reweight") return RegionalMode::reweight;
  if (s == "collapse") return RegionalMode::collapse;
  if (s == "off") return RegionalMode::off;
  throw ConfigError("unknown regional mode '" + s + "' (reweight|collapse|off)");
}

std::string to_string(RegionalMode m) {
  switch (m) {
    case RegionalMode::reweight: return "reweight";
    case RegionalMode::collapse: return "collapse";
    default: return "off";
  }
}

void RegionalAttentionParams::init(const RegionalConfig& cfg, Rng& rng) {
  score_w = Tensor({cfg.channels, 1});
  for (std::size_t i = 0; i < score_w.size(); ++i) score_w.data()[i] = rng.trunc_normal(0.02);
  score_w.set_requires_grad(true);
  score_b = Tensor({1});
  score_b.set_requires_grad(true);
  proj.init(cfg.channels, cfg.decoder_dim, rng);
}

void RegionalAttentionParams::collect(ParamMap& pm, const std::string& prefix) const {
  pm.add(prefix + ".score_w", score_w);
  pm.add(prefix + ".score_b", score_b);
  proj.collect(pm, prefix + ".proj");
}

Tensor region_scores(const FeatureGrid& grid, const RegionalAttentionParams& params) {
  if (grid.channels != params.score_w.dim(0)) {
    throw ShapeError("region_scores: grid channels " + std::to_string(grid.channels) +
                     " vs score weights " + shape_str(params.score_w.shape()));
  }
  std::size_t b = grid.batch, n = grid.height * grid.width;
  Tensor logits = add_bias(matmul(grid.values, params.score_w), params.score_b);
  return softmax(logits.reshaped({b, n}), 1);
}

Tensor attend(const FeatureGrid& grid, const Tensor& alpha, RegionalMode mode) {
  std::size_t b = grid.batch, n = grid.height * grid.width, c = grid.channels;
  if (alpha.shape() != Shape{b, n}) {
    throw ShapeError("attend: alpha " + shape_str(alpha.shape()) + " vs grid [" +
                     std::to_string(b) + "," + std::to_string(n) + "]");
  }
  for (std::size_t bi = 0; bi < b; ++bi) {
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) s += alpha.data()[bi * n + i];
    if (std::fabs(s - 1.0) > 1e-8) {
      throw ContractError("attend: alpha row " + std::to_string(bi) + " sums to " +
                          std::to_string(s));
    }
  }

  if (mode == RegionalMode::off) return grid.values;

  if (mode == RegionalMode::collapse) {
    // Literal weighted sum to one vector, broadcast back to length N.
    Tensor ctx = matmul(alpha.reshaped({b, 1, n}), grid.values);  // [B,1,C]
    auto map = std::make_shared<IndexMap>(b * n * c);
    std::size_t j = 0;
    for (std::size_t bi = 0; bi < b; ++bi)
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t ci = 0; ci < c; ++ci) (*map)[j++] = bi * c + ci;
    return gather(ctx, map, {b, n, c});
  }

  // reweight: per-region scaling, x N so uniform alpha is the identity.
  auto map = std::make_shared<IndexMap>(b * n * c);
  std::size_t j = 0;
  for (std::size_t bi = 0; bi < b; ++bi)
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t ci = 0; ci < c; ++ci) (*map)[j++] = bi * n + i;
  Tensor expanded = gather(alpha, map, {b, n, c});
  return scale(mul(expanded, grid.values), static_cast<double>(n));
}

std::vector<std::pair<std::size_t, std::size_t>> pool_bins(std::size_t n, std::size_t k) {
  if (k == 0 || k > n) {
    throw ConfigError("adaptive_pool: K=" + std::to_string(k) + " outside [1," +
                      std::to_string(n) + "]");
  }
  std::vector<std::pair<std::size_t, std::size_t>> bins(k);
  for (std::size_t i = 0; i < k; ++i) {
    std::size_t lo = i * n / k;
    std::size_t hi = ((i + 1) * n + k - 1) / k;
    bins[i] = {lo, hi};
  }
  return bins;
}

Tensor adaptive_pool(const Tensor& seq, std::size_t k) {
  if (seq.ndim() != 3) throw ShapeError("adaptive_pool expects [B,N,D]");
  std::size_t n = seq.dim(1);
  auto bins = pool_bins(n, k);
  Tensor pool_mat({k, n});
  for (std::size_t i = 0; i < k; ++i) {
    auto [lo, hi] = bins[i];
    double w = 1.0 / static_cast<double>(hi - lo);
    for (std::size_t j = lo; j < hi; ++j) pool_mat.data()[i * n + j] = w;
  }
  return matmul(pool_mat, seq);
}

RegionalAttentionOutput regional_forward(const FeatureGrid& grid,
                                         const RegionalAttentionParams& params,
                                         const RegionalConfig& cfg, Rng& rng, bool training) {
  std::size_t b = grid.batch, n = grid.height * grid.width;
  RegionalAttentionOutput out;
  if (cfg.mode == RegionalMode::off) {
    out.alpha = Tensor::full({b, n}, 1.0 / static_cast<double>(n));
    out.attended = grid.values;
  } else {
    out.alpha = region_scores(grid, params);
    out.attended = attend(grid, out.alpha, cfg.mode);
  }
  out.projected = dropout(params.proj.forward(out.attended), cfg.dropout_p, rng, training);
  out.pooled = adaptive_pool(out.projected, cfg.pooled_tokens);
  return out;
}

}  // namespace capgen
