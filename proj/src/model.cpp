#include "capgen/model.hpp"

namespace capgen {

void ModelConfig::validate() const {
  encoder.validate();
  decoder.validate();
  if (regional.channels != encoder.final_channels()) {
    throw ConfigError("regional channels " + std::to_string(regional.channels) +
                      " do not match encoder output " +
                      std::to_string(encoder.final_channels()));
  }
  if (regional.decoder_dim != decoder.model_dim) {
    throw ConfigError("regional decoder_dim " + std::to_string(regional.decoder_dim) +
                      " does not match decoder model_dim " + std::to_string(decoder.model_dim));
  }
  if (regional.pooled_tokens > encoder.regions()) {
    throw ConfigError("pooled_tokens " + std::to_string(regional.pooled_tokens) +
                      " exceeds region count " + std::to_string(encoder.regions()));
  }
}

ModelConfig ModelConfig::toy(std::size_t vocab) {
  ModelConfig cfg;
  cfg.encoder = EncoderConfig::toy();
  cfg.regional = RegionalConfig{64, 32, 8, RegionalMode::reweight, 0.1};
  cfg.decoder.vocab_size = vocab;
  return cfg;
}

CaptionModel::CaptionModel(ModelConfig cfg, EmbeddingTable embed, Rng& rng)
    : cfg_((cfg.validate(), std::move(cfg))),
      encoder_(cfg_.encoder, rng),
      decoder_(cfg_.decoder, std::move(embed), rng) {
  regional_.init(cfg_.regional, rng);
  if (cfg_.freeze_encoder) {
    ParamMap pm;
    encoder_.collect_params(pm, "enc");
    for (auto& [name, t] : pm.items()) t.set_requires_grad(false);
  }
}

EncodeResult CaptionModel::encode(const Tensor& images, Rng& rng, bool training) const {
  EncodeResult r;
  r.grid = encoder_.encode(images);
  r.regional = regional_forward(r.grid, regional_, cfg_.regional, rng, training);
  return r;
}

Tensor CaptionModel::forward_loss(const Tensor& images, const std::vector<std::vector<int>>& sequences,
                                  int pad_id, Rng& rng, bool training) const {
  if (sequences.empty()) throw ContractError("forward_loss: empty batch");
  std::size_t t = sequences[0].size();
  if (t < 2) throw ContractError("forward_loss: sequences need >= 2 tokens");
  for (const auto& s : sequences) {
    if (s.size() != t) throw ShapeError("forward_loss: ragged sequence batch");
  }

  EncodeResult enc = encode(images, rng, training);

  std::vector<std::vector<int>> inputs;
  std::vector<int> targets;
  inputs.reserve(sequences.size());
  for (const auto& s : sequences) {
    inputs.emplace_back(s.begin(), s.end() - 1);
    targets.insert(targets.end(), s.begin() + 1, s.end());
  }
  Tensor logits = decoder_.decode_logits(inputs, enc.regional.pooled);
  std::size_t rows = sequences.size() * (t - 1);
  return cross_entropy(logits.reshaped({rows, cfg_.decoder.vocab_size}), targets, pad_id);
}

BeamResult CaptionModel::caption(const Tensor& image, const DecodeConfig& dcfg, Rng& rng) const {
  Tensor batch = image;
  if (batch.ndim() == 3) {
    Shape s = batch.shape();
    batch = batch.reshaped({1, s[0], s[1], s[2]});
  }
  if (batch.ndim() != 4 || batch.dim(0) != 1) {
    throw ShapeError("caption: expected a single image, got " + shape_str(batch.shape()));
  }
  EncodeResult enc = encode(batch, rng, false);
  Tensor f_enc = enc.regional.pooled;

  StepFn step = [this, f_enc](const std::vector<int>& prefix) {
    Tensor lp = decoder_.next_token_logprobs({prefix}, f_enc);
    return std::vector<double>(lp.vec().begin(), lp.vec().end());
  };
  return beam_search(step, dcfg);
}

ParamMap CaptionModel::params() const {
  ParamMap pm;
  encoder_.collect_params(pm, "encoder");
  regional_.collect(pm, "regional");
  decoder_.collect_params(pm, "decoder");
  return pm;
}

}  // namespace capgen
