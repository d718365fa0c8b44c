#include "capgen/decoder.hpp"

#include "capgen/checkpoint.hpp"

namespace capgen {

void DecoderConfig::validate() const {
  if (model_dim % heads != 0) throw ConfigError("decoder: heads must divide model_dim");
  if (vocab_size == 0 || layers == 0 || max_positions == 0) {
    throw ConfigError("decoder: vocab_size, layers, max_positions must be positive");
  }
}

EmbeddingTable random_embedding_table(std::size_t vocab, std::size_t dim, Rng& rng, bool frozen) {
  EmbeddingTable t;
  t.matrix = Tensor({vocab, dim});
  for (std::size_t i = 0; i < t.matrix.size(); ++i) t.matrix.data()[i] = rng.trunc_normal(0.02);
  t.provenance = "random";
  t.set_frozen(frozen);
  return t;
}

EmbeddingTable load_embedding_table(const std::string& path, std::size_t expected_vocab,
                                    std::size_t expected_dim, bool frozen) {
  ParamMap pm = load_all_tensors(path);
  Tensor* m = pm.find("embedding");
  if (!m) throw IoError("no 'embedding' tensor in " + path);
  if (m->shape() != Shape{expected_vocab, expected_dim}) {
    throw IoError("embedding table shape mismatch: expected [" + std::to_string(expected_vocab) +
                  "," + std::to_string(expected_dim) + "], found " + shape_str(m->shape()) +
                  " in " + path);
  }
  EmbeddingTable t;
  t.matrix = *m;
  t.provenance = path;
  t.set_frozen(frozen);
  return t;
}

void save_embedding_table(const std::string& path, const EmbeddingTable& table) {
  ParamMap pm;
  pm.add("embedding", table.matrix);
  save_tensors(path, pm);
}

CaptionDecoder::CaptionDecoder(DecoderConfig cfg, EmbeddingTable embed, Rng& rng)
    : cfg_(std::move(cfg)), embed_(std::move(embed)) {
  cfg_.validate();
  if (embed_.matrix.shape() != Shape{cfg_.vocab_size, cfg_.model_dim}) {
    throw ConfigError("embedding table " + shape_str(embed_.matrix.shape()) +
                      " does not match decoder config [" + std::to_string(cfg_.vocab_size) + "," +
                      std::to_string(cfg_.model_dim) + "]");
  }
  pos_ = Tensor({cfg_.max_positions, cfg_.model_dim});
  for (std::size_t i = 0; i < pos_.size(); ++i) pos_.data()[i] = rng.trunc_normal(0.02);
  pos_.set_requires_grad(true);

  for (std::size_t l = 0; l < cfg_.layers; ++l) {
    Layer layer;
    layer.self_attn.init(cfg_.model_dim, cfg_.heads, rng);
    layer.cross_attn.init(cfg_.model_dim, cfg_.heads, rng);
    layer.ln1.init(cfg_.model_dim);
    layer.ln2.init(cfg_.model_dim);
    layer.ln3.init(cfg_.model_dim);
    layer.fc1.init(cfg_.model_dim, cfg_.ffn_dim, rng);
    layer.fc2.init(cfg_.ffn_dim, cfg_.model_dim, rng);
    layers_.push_back(std::move(layer));
  }
  if (!cfg_.tie_output_to_embedding) out_proj_.init(cfg_.model_dim, cfg_.vocab_size, rng);
}

Tensor CaptionDecoder::decode_logits(const std::vector<std::vector<int>>& tokens,
                                     const Tensor& f_enc) const {
  std::size_t b = tokens.size();
  if (b == 0) throw ContractError("decode_logits: empty batch");
  std::size_t t = tokens[0].size();
  for (const auto& seq : tokens) {
    if (seq.size() != t) throw ShapeError("decode_logits: ragged token batch");
  }
  if (t == 0) throw ContractError("decode_logits: empty sequence");
  if (t > cfg_.max_positions) {
    throw DataError("sequence length " + std::to_string(t) + " exceeds max_positions " +
                    std::to_string(cfg_.max_positions));
  }
  if (f_enc.ndim() != 3 || f_enc.dim(0) != b || f_enc.dim(2) != cfg_.model_dim) {
    throw ShapeError("decode_logits: f_enc " + shape_str(f_enc.shape()) + " vs batch " +
                     std::to_string(b) + ", dim " + std::to_string(cfg_.model_dim));
  }

  std::vector<int> flat;
  flat.reserve(b * t);
  for (const auto& seq : tokens) flat.insert(flat.end(), seq.begin(), seq.end());

  std::size_t d = cfg_.model_dim;
  Tensor x = capgen::embedding(embed_.matrix, flat).reshaped({b, t, d});
  // Learned absolute positions: first t rows of the table tile over batch.
  auto pmap = std::make_shared<IndexMap>(t * d);
  for (std::size_t i = 0; i < t * d; ++i) (*pmap)[i] = i;
  x = add_bias(x, gather(pos_, pmap, {t, d}));

  Tensor causal({t, t});
  for (std::size_t i = 0; i < t; ++i)
    for (std::size_t j = i + 1; j < t; ++j) causal.data()[i * t + j] = -1e30;

  for (const Layer& layer : layers_) {
    x = layer.ln1.forward(add(x, multihead_attention(x, x, layer.self_attn, &causal)));
    x = layer.ln2.forward(add(x, multihead_attention(x, f_enc, layer.cross_attn, nullptr)));
    x = layer.ln3.forward(add(x, layer.fc2.forward(gelu(layer.fc1.forward(x)))));
  }

  if (cfg_.tie_output_to_embedding) return matmul(x, transpose_last2(embed_.matrix));
  return out_proj_.forward(x);
}

Tensor CaptionDecoder::next_token_logprobs(const std::vector<std::vector<int>>& prefixes,
                                           const Tensor& f_enc) const {
  for (const auto& p : prefixes) {
    if (p.empty()) throw ContractError("next_token_logprobs: empty prefix");
  }
  Tensor logits = decode_logits(prefixes, f_enc);
  std::size_t b = logits.dim(0), t = logits.dim(1), v = logits.dim(2);
  auto map = std::make_shared<IndexMap>(b * v);
  for (std::size_t bi = 0; bi < b; ++bi)
    for (std::size_t j = 0; j < v; ++j) (*map)[bi * v + j] = (bi * t + t - 1) * v + j;
  return log_softmax_last(gather(logits, map, {b, v}));
}

void CaptionDecoder::collect_params(ParamMap& pm, const std::string& prefix) const {
  pm.add(prefix + ".embedding", embed_.matrix);
  pm.add(prefix + ".pos", pos_);
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    std::string lp = prefix + ".layer" + std::to_string(l);
    layers_[l].self_attn.collect(pm, lp + ".self_attn");
    layers_[l].cross_attn.collect(pm, lp + ".cross_attn");
    layers_[l].ln1.collect(pm, lp + ".ln1");
    layers_[l].ln2.collect(pm, lp + ".ln2");
    layers_[l].ln3.collect(pm, lp + ".ln3");
    layers_[l].fc1.collect(pm, lp + ".fc1");
    layers_[l].fc2.collect(pm, lp + ".fc2");
  }
  if (!cfg_.tie_output_to_embedding) out_proj_.collect(pm, prefix + ".out_proj");
}

}  // namespace capgen
