#pragma once

#include "capgen/beam.hpp"
#include "capgen/decoder.hpp"
#include "capgen/regional.hpp"

namespace capgen {

struct ModelConfig {
  EncoderConfig encoder;
  RegionalConfig regional;
  DecoderConfig decoder;
  bool freeze_encoder = false;

  void validate() const;

  // Toy scale end to end: 32px encoder, C=64, D=32, K=8.
  static ModelConfig toy(std::size_t vocab);
};

// Encoder grid plus the regional-attention products for one forward pass;
// alpha is kept for heatmap export.
struct EncodeResult {
  FeatureGrid grid;
  RegionalAttentionOutput regional;
};

class CaptionModel {
 public:
  CaptionModel(ModelConfig cfg, EmbeddingTable embed, Rng& rng);

  EncodeResult encode(const Tensor& images, Rng& rng, bool training) const;

  // Teacher forcing: inputs are seq[0..T-2], targets seq[1..T-1], mean CE
  // over non-pad target positions. Sequences must share a common length.
  Tensor forward_loss(const Tensor& images, const std::vector<std::vector<int>>& sequences,
                      int pad_id, Rng& rng, bool training) const;

  // Beam-search caption for a single image [1,3,S,S] or [3,S,S].
  BeamResult caption(const Tensor& image, const DecodeConfig& dcfg, Rng& rng) const;

  ParamMap params() const;

  const ModelConfig& config() const { return cfg_; }
  const CaptionDecoder& decoder() const { return decoder_; }
  CaptionDecoder& decoder() { return decoder_; }

 private:
  ModelConfig cfg_;
  VisionEncoder encoder_;
  RegionalAttentionParams regional_;
  CaptionDecoder decoder_;
};

}  // namespace capgen
