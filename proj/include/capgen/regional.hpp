#pragma once

#include <string>
#include <utility>
#include <vector>

#include "capgen/encoder.hpp"

namespace capgen {

// How region weights are applied to the feature sequence:
//   reweight - per-region scaling attended_i = N * alpha_i * F_i, so uniform
//              weights are exactly the identity on the sequence;
//   collapse - the literal weighted sum producing one vector, broadcast back
//              to sequence length;
//   off      - ablation bypass, weights reported as uniform.
enum class RegionalMode { reweight, collapse, off };

RegionalMode regional_mode_from_string(const std::string& s);
std::string to_string(RegionalMode m);

struct RegionalConfig {
  std::size_t channels = 64;      // encoder C
  std::size_t decoder_dim = 32;   // D
  std::size_t pooled_tokens = 8;  // K
  RegionalMode mode = RegionalMode::reweight;
  double dropout_p = 0.1;

  static RegionalConfig paper() { return {1024, 768, 29, RegionalMode::reweight, 0.1}; }
};

struct RegionalAttentionParams {
  Tensor score_w;  // [C, 1]
  Tensor score_b;  // [1]
  Linear proj;     // C -> D

  void init(const RegionalConfig& cfg, Rng& rng);
  void collect(ParamMap& pm, const std::string& prefix) const;
};

struct RegionalAttentionOutput {
  Tensor alpha;      // [B, N]
  Tensor attended;   // [B, N, C]
  Tensor projected;  // [B, N, D]
  Tensor pooled;     // [B, K, D]
};

// alpha = softmax over regions of the learned linear score.
Tensor region_scores(const FeatureGrid& grid, const RegionalAttentionParams& params);

// Applies normalized weights; throws ContractError if a row of alpha
// deviates from sum 1 by more than 1e-8.
Tensor attend(const FeatureGrid& grid, const Tensor& alpha, RegionalMode mode);

// Contiguous-bin boundaries [floor(k*N/K), ceil((k+1)*N/K)) for k in [0,K).
std::vector<std::pair<std::size_t, std::size_t>> pool_bins(std::size_t n, std::size_t k);

// Averages each bin: [B,N,D] -> [B,K,D].
Tensor adaptive_pool(const Tensor& seq, std::size_t k);

RegionalAttentionOutput regional_forward(const FeatureGrid& grid,
                                         const RegionalAttentionParams& params,
                                         const RegionalConfig& cfg, Rng& rng, bool training);

}  // namespace capgen
