#pragma once

#include <vector>

#include "capgen/layers.hpp"

namespace capgen {

struct EncoderConfig {
  std::size_t image_size = 32;
  std::size_t patch_size = 4;
  std::vector<std::size_t> stage_depths = {1, 1};
  std::vector<std::size_t> stage_dims = {32, 64};
  std::vector<std::size_t> heads_per_stage = {2, 2};
  std::size_t window_size = 4;
  std::size_t mlp_ratio = 4;

  // 32px, 2 stages, C=64, 4x4 grid: trains on a CPU in minutes.
  static EncoderConfig toy();
  // 224px, 4 stages, dims to 1024, window 7: 7x7x1024 output grid.
  static EncoderConfig paper_shape();

  std::size_t stages() const { return stage_depths.size(); }
  std::size_t patch_grid() const { return image_size / patch_size; }
  std::size_t final_grid() const { return patch_grid() >> (stages() - 1); }
  std::size_t final_channels() const { return stage_dims.back(); }
  std::size_t regions() const { return final_grid() * final_grid(); }
  void validate() const;
};

// Encoder output as a flattened row-major (H,W) token sequence.
struct FeatureGrid {
  std::size_t batch = 0, height = 0, width = 0, channels = 0;
  Tensor values;  // [B, H*W, C]
};

// Non-overlapping p x p patches, flattened per patch: [B,3,S,S] -> [B,(S/p)^2,3*p*p].
Tensor patch_regroup(const Tensor& image, std::size_t patch);

// Bijective re-indexing into per-window token blocks: [B*nW, w*w, C].
Tensor window_partition(const FeatureGrid& grid, std::size_t w);
FeatureGrid window_merge(const Tensor& windows, std::size_t batch, std::size_t height,
                         std::size_t width, std::size_t w);

// Toroidal roll of the 2-d grid; contents move down by dy and right by dx.
FeatureGrid cyclic_shift(const FeatureGrid& grid, int dy, int dx);

// Additive score mask for shifted windows: [nW, heads, w*w, w*w], 0 for pairs
// from the same pre-shift region and -1e30 across boundaries.
Tensor shifted_window_mask(std::size_t height, std::size_t width, std::size_t w, std::size_t shift,
                           std::size_t heads);

// Self-attention over each window independently; mask as above or null.
Tensor window_attention(const Tensor& windows, const AttentionParams& p, const Tensor* mask);

class VisionEncoder {
 public:
  VisionEncoder(EncoderConfig cfg, Rng& rng);

  Tensor patchify(const Tensor& image) const;
  FeatureGrid encode(const Tensor& image) const;

  const EncoderConfig& config() const { return cfg_; }
  void collect_params(ParamMap& pm, const std::string& prefix) const;

 private:
  struct Block {
    LayerNormParams ln1, ln2;
    AttentionParams attn;
    Linear fc1, fc2;
    bool shifted = false;
  };
  struct Stage {
    std::vector<Block> blocks;
    // Patch merging into the next stage (absent on the last stage).
    bool has_merge = false;
    LayerNormParams merge_ln;
    Linear merge;
  };

  EncoderConfig cfg_;
  Linear patch_embed_;
  std::vector<Stage> stages_;
};

// 2x2 neighborhood concat (4C) + layer norm + linear reduction.
FeatureGrid patch_merge(const FeatureGrid& grid, const LayerNormParams& ln, const Linear& reduce);

}  // namespace capgen
