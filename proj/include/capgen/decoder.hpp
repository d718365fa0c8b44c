#pragma once

#include <string>
#include <vector>

#include "capgen/layers.hpp"

namespace capgen {

struct DecoderConfig {
  std::size_t vocab_size = 32;
  std::size_t model_dim = 32;
  std::size_t layers = 2;
  std::size_t heads = 4;
  std::size_t ffn_dim = 128;
  std::size_t max_positions = 128;
  bool tie_output_to_embedding = true;

  void validate() const;
};

struct EmbeddingTable {
  Tensor matrix;  // [V, D]
  bool frozen = false;
  std::string provenance = "random";

  void set_frozen(bool f) {
    frozen = f;
    matrix.set_requires_grad(!f);
  }
};

EmbeddingTable random_embedding_table(std::size_t vocab, std::size_t dim, Rng& rng, bool frozen);
EmbeddingTable load_embedding_table(const std::string& path, std::size_t expected_vocab,
                                    std::size_t expected_dim, bool frozen);
void save_embedding_table(const std::string& path, const EmbeddingTable& table);

// Causal transformer decoder with cross-attention over pooled image tokens,
// post-norm residual blocks, learned positions, and an output projection
// optionally tied to the embedding table.
class CaptionDecoder {
 public:
  CaptionDecoder(DecoderConfig cfg, EmbeddingTable embed, Rng& rng);

  // tokens: B sequences of equal length T <= max_positions. f_enc [B,K,D].
  Tensor decode_logits(const std::vector<std::vector<int>>& tokens, const Tensor& f_enc) const;

  // Log-probabilities of the next token after each prefix: [B, V].
  Tensor next_token_logprobs(const std::vector<std::vector<int>>& prefixes,
                             const Tensor& f_enc) const;

  const DecoderConfig& config() const { return cfg_; }
  EmbeddingTable& embedding() { return embed_; }
  const EmbeddingTable& embedding() const { return embed_; }

  void collect_params(ParamMap& pm, const std::string& prefix) const;

 private:
  struct Layer {
    AttentionParams self_attn, cross_attn;
    LayerNormParams ln1, ln2, ln3;
    Linear fc1, fc2;
  };

  DecoderConfig cfg_;
  EmbeddingTable embed_;
  Tensor pos_;  // [max_positions, D]
  std::vector<Layer> layers_;
  Linear out_proj_;  // used only when untied
};

}  // namespace capgen
