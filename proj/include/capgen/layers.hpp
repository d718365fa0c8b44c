#pragma once

#include <string>

#include "capgen/ops.hpp"
#include "capgen/params.hpp"

namespace capgen {

struct Linear {
  Tensor w;  // [in, out]
  Tensor b;  // [out]

  void init(std::size_t in, std::size_t out, Rng& rng, double std_dev = 0.02) {
    w = Tensor({in, out});
    for (std::size_t i = 0; i < w.size(); ++i) w.data()[i] = rng.trunc_normal(std_dev);
    w.set_requires_grad(true);
    b = Tensor({out});
    b.set_requires_grad(true);
  }

  Tensor forward(const Tensor& x) const { return add_bias(matmul(x, w), b); }

  void collect(ParamMap& pm, const std::string& prefix) const {
    pm.add(prefix + ".w", w);
    pm.add(prefix + ".b", b);
  }
};

struct LayerNormParams {
  Tensor gain;
  Tensor bias;

  void init(std::size_t d) {
    gain = Tensor::full({d}, 1.0);
    gain.set_requires_grad(true);
    bias = Tensor({d});
    bias.set_requires_grad(true);
  }

  Tensor forward(const Tensor& x) const { return layer_norm(x, gain, bias); }

  void collect(ParamMap& pm, const std::string& prefix) const {
    pm.add(prefix + ".gain", gain);
    pm.add(prefix + ".bias", bias);
  }
};

struct AttentionParams {
  Linear q, k, v, o;
  std::size_t heads = 1;

  void init(std::size_t dim, std::size_t n_heads, Rng& rng) {
    heads = n_heads;
    q.init(dim, dim, rng);
    k.init(dim, dim, rng);
    v.init(dim, dim, rng);
    o.init(dim, dim, rng);
  }

  void collect(ParamMap& pm, const std::string& prefix) const {
    q.collect(pm, prefix + ".q");
    k.collect(pm, prefix + ".k");
    v.collect(pm, prefix + ".v");
    o.collect(pm, prefix + ".o");
  }
};

// Multi-head scaled dot-product attention. q_in [B,Tq,C], kv_in [B,Tk,C].
// mask, when given, is added to the score logits with cyclic tiling, so its
// trailing dims must match the score layout (e.g. [Tq,Tk] or [nW,H,Tq,Tk]).
Tensor multihead_attention(const Tensor& q_in, const Tensor& kv_in, const AttentionParams& p,
                           const Tensor* mask);

}  // namespace capgen
