#include "capgen/encoder.hpp"

#include <cmath>

namespace capgen {

Tensor multihead_attention(const Tensor& q_in, const Tensor& kv_in, const AttentionParams& p,
                           const Tensor* mask) {
  std::size_t b = q_in.dim(0), tq = q_in.dim(1), c = q_in.dim(2);
  std::size_t tk = kv_in.dim(1);
  std::size_t h = p.heads;
  if (c % h != 0) {
    throw ConfigError("attention heads " + std::to_string(h) + " do not divide dim " +
                      std::to_string(c));
  }
  std::size_t dh = c / h;

  Tensor qh = permute(p.q.forward(q_in).reshaped({b, tq, h, dh}), {0, 2, 1, 3});
  Tensor kh = permute(p.k.forward(kv_in).reshaped({b, tk, h, dh}), {0, 2, 1, 3});
  Tensor vh = permute(p.v.forward(kv_in).reshaped({b, tk, h, dh}), {0, 2, 1, 3});

  Tensor scores = scale(matmul(qh, transpose_last2(kh)), 1.0 / std::sqrt(static_cast<double>(dh)));
  if (mask) scores = add_mask(scores, *mask);
  Tensor attn = softmax(scores, 3);
  Tensor ctx = permute(matmul(attn, vh), {0, 2, 1, 3}).reshaped({b, tq, c});
  return p.o.forward(ctx);
}

EncoderConfig EncoderConfig::toy() { return EncoderConfig{}; }

EncoderConfig EncoderConfig::paper_shape() {
  EncoderConfig cfg;
  cfg.image_size = 224;
  cfg.patch_size = 4;
  cfg.stage_depths = {2, 2, 2, 2};
  cfg.stage_dims = {128, 256, 512, 1024};
  cfg.heads_per_stage = {4, 8, 16, 32};
  cfg.window_size = 7;
  return cfg;
}

void EncoderConfig::validate() const {
  if (stage_depths.empty() || stage_depths.size() != stage_dims.size() ||
      stage_depths.size() != heads_per_stage.size()) {
    throw ConfigError("encoder: stage_depths, stage_dims, heads_per_stage lengths must match");
  }
  if (patch_size == 0 || image_size % patch_size != 0) {
    throw ConfigError("encoder: image_size must be divisible by patch_size");
  }
  std::size_t grid = patch_grid();
  for (std::size_t s = 0; s < stages(); ++s) {
    if (grid % window_size != 0) {
      throw ConfigError("encoder: stage " + std::to_string(s) + " grid " + std::to_string(grid) +
                        " not divisible by window " + std::to_string(window_size));
    }
    if (stage_dims[s] % heads_per_stage[s] != 0) {
      throw ConfigError("encoder: stage " + std::to_string(s) + " heads do not divide dim");
    }
    if (s + 1 < stages()) {
      if (grid % 2 != 0) throw ConfigError("encoder: odd grid before patch merge");
      grid /= 2;
    }
  }
}

Tensor patch_regroup(const Tensor& image, std::size_t patch) {
  if (image.ndim() != 4 || image.dim(1) != 3) {
    throw ShapeError("patch_regroup expects [B,3,S,S], got " + shape_str(image.shape()));
  }
  std::size_t b = image.dim(0), s = image.dim(2);
  if (image.dim(3) != s || s % patch != 0) {
    throw ShapeError("patch_regroup: spatial size " + shape_str(image.shape()) +
                     " incompatible with patch " + std::to_string(patch));
  }
  std::size_t g = s / patch, e = 3 * patch * patch;
  auto map = std::make_shared<IndexMap>(b * g * g * e);
  std::size_t j = 0;
  for (std::size_t bi = 0; bi < b; ++bi)
    for (std::size_t gy = 0; gy < g; ++gy)
      for (std::size_t gx = 0; gx < g; ++gx)
        for (std::size_t c = 0; c < 3; ++c)
          for (std::size_t py = 0; py < patch; ++py)
            for (std::size_t px = 0; px < patch; ++px)
              (*map)[j++] = ((bi * 3 + c) * s + gy * patch + py) * s + gx * patch + px;
  return gather(image, map, {b, g * g, e});
}

Tensor window_partition(const FeatureGrid& grid, std::size_t w) {
  std::size_t h = grid.height, wd = grid.width, c = grid.channels, b = grid.batch;
  if (h % w != 0 || wd % w != 0) {
    throw ConfigError("window_partition: grid " + std::to_string(h) + "x" + std::to_string(wd) +
                      " not divisible by window " + std::to_string(w));
  }
  std::size_t nwy = h / w, nwx = wd / w;
  auto map = std::make_shared<IndexMap>(grid.values.size());
  std::size_t j = 0;
  for (std::size_t bi = 0; bi < b; ++bi)
    for (std::size_t wy = 0; wy < nwy; ++wy)
      for (std::size_t wx = 0; wx < nwx; ++wx)
        for (std::size_t ty = 0; ty < w; ++ty)
          for (std::size_t tx = 0; tx < w; ++tx) {
            std::size_t pos = (wy * w + ty) * wd + wx * w + tx;
            for (std::size_t ci = 0; ci < c; ++ci) (*map)[j++] = (bi * h * wd + pos) * c + ci;
          }
  return gather(grid.values, map, {b * nwy * nwx, w * w, c});
}

FeatureGrid window_merge(const Tensor& windows, std::size_t batch, std::size_t height,
                         std::size_t width, std::size_t w) {
  std::size_t c = windows.dim(2);
  std::size_t nwx = width / w;
  auto map = std::make_shared<IndexMap>(windows.size());
  std::size_t j = 0;
  for (std::size_t bi = 0; bi < batch; ++bi)
    for (std::size_t y = 0; y < height; ++y)
      for (std::size_t x = 0; x < width; ++x) {
        std::size_t wi = (y / w) * nwx + x / w;
        std::size_t t = (y % w) * w + x % w;
        for (std::size_t ci = 0; ci < c; ++ci)
          (*map)[j++] = ((bi * (height / w) * nwx + wi) * w * w + t) * c + ci;
      }
  FeatureGrid out{batch, height, width, c,
                  gather(windows, map, {batch, height * width, c})};
  return out;
}

FeatureGrid cyclic_shift(const FeatureGrid& grid, int dy, int dx) {
  std::size_t h = grid.height, w = grid.width, c = grid.channels, b = grid.batch;
  auto wrap = [](long v, long m) { return static_cast<std::size_t>(((v % m) + m) % m); };
  auto map = std::make_shared<IndexMap>(grid.values.size());
  std::size_t j = 0;
  for (std::size_t bi = 0; bi < b; ++bi)
    for (std::size_t y = 0; y < h; ++y)
      for (std::size_t x = 0; x < w; ++x) {
        std::size_t sy = wrap(static_cast<long>(y) - dy, static_cast<long>(h));
        std::size_t sx = wrap(static_cast<long>(x) - dx, static_cast<long>(w));
        for (std::size_t ci = 0; ci < c; ++ci)
          (*map)[j++] = (bi * h * w + sy * w + sx) * c + ci;
      }
  return FeatureGrid{b, h, w, c, gather(grid.values, map, grid.values.shape())};
}

Tensor shifted_window_mask(std::size_t height, std::size_t width, std::size_t w, std::size_t shift,
                           std::size_t heads) {
  auto region = [&](std::size_t v, std::size_t extent) {
    if (v < extent - w) return 0;
    if (v < extent - shift) return 1;
    return 2;
  };
  std::size_t nwy = height / w, nwx = width / w, t = w * w;
  Tensor mask({nwy * nwx, heads, t, t});
  double* m = mask.data();
  for (std::size_t wy = 0; wy < nwy; ++wy)
    for (std::size_t wx = 0; wx < nwx; ++wx) {
      std::size_t wi = wy * nwx + wx;
      for (std::size_t i = 0; i < t; ++i) {
        std::size_t yi = wy * w + i / w, xi = wx * w + i % w;
        int li = region(yi, height) * 3 + region(xi, width);
        for (std::size_t jj = 0; jj < t; ++jj) {
          std::size_t yj = wy * w + jj / w, xj = wx * w + jj % w;
          int lj = region(yj, height) * 3 + region(xj, width);
          double v = (li == lj) ? 0.0 : -1e30;
          for (std::size_t hh = 0; hh < heads; ++hh)
            m[((wi * heads + hh) * t + i) * t + jj] = v;
        }
      }
    }
  return mask;
}

Tensor window_attention(const Tensor& windows, const AttentionParams& p, const Tensor* mask) {
  return multihead_attention(windows, windows, p, mask);
}

FeatureGrid patch_merge(const FeatureGrid& grid, const LayerNormParams& ln, const Linear& reduce) {
  std::size_t h = grid.height, w = grid.width, c = grid.channels, b = grid.batch;
  if (h % 2 != 0 || w % 2 != 0) {
    throw ConfigError("patch_merge: odd grid " + std::to_string(h) + "x" + std::to_string(w));
  }
  std::size_t oh = h / 2, ow = w / 2;
  auto map = std::make_shared<IndexMap>(grid.values.size());
  std::size_t j = 0;
  // Neighbor order (0,0),(1,0),(0,1),(1,1) along the channel axis.
  const std::size_t offs[4][2] = {{0, 0}, {1, 0}, {0, 1}, {1, 1}};
  for (std::size_t bi = 0; bi < b; ++bi)
    for (std::size_t y = 0; y < oh; ++y)
      for (std::size_t x = 0; x < ow; ++x)
        for (const auto& o : offs) {
          std::size_t pos = (y * 2 + o[0]) * w + x * 2 + o[1];
          for (std::size_t ci = 0; ci < c; ++ci) (*map)[j++] = (bi * h * w + pos) * c + ci;
        }
  Tensor cat = gather(grid.values, map, {b, oh * ow, 4 * c});
  Tensor reduced = reduce.forward(ln.forward(cat));
  return FeatureGrid{b, oh, ow, reduced.dim(2), reduced};
}

VisionEncoder::VisionEncoder(EncoderConfig cfg, Rng& rng) : cfg_(std::move(cfg)) {
  cfg_.validate();
  patch_embed_.init(3 * cfg_.patch_size * cfg_.patch_size, cfg_.stage_dims[0], rng);
  for (std::size_t s = 0; s < cfg_.stages(); ++s) {
    Stage stage;
    std::size_t dim = cfg_.stage_dims[s];
    for (std::size_t d = 0; d < cfg_.stage_depths[s]; ++d) {
      Block blk;
      blk.ln1.init(dim);
      blk.ln2.init(dim);
      blk.attn.init(dim, cfg_.heads_per_stage[s], rng);
      blk.fc1.init(dim, dim * cfg_.mlp_ratio, rng);
      blk.fc2.init(dim * cfg_.mlp_ratio, dim, rng);
      blk.shifted = (d % 2 == 1);
      stage.blocks.push_back(std::move(blk));
    }
    if (s + 1 < cfg_.stages()) {
      stage.has_merge = true;
      stage.merge_ln.init(4 * dim);
      stage.merge.init(4 * dim, cfg_.stage_dims[s + 1], rng);
    }
    stages_.push_back(std::move(stage));
  }
}

Tensor VisionEncoder::patchify(const Tensor& image) const {
  if (image.ndim() != 4 || image.dim(2) != cfg_.image_size || image.dim(3) != cfg_.image_size) {
    throw ShapeError("encoder expects [B,3," + std::to_string(cfg_.image_size) + "," +
                     std::to_string(cfg_.image_size) + "], got " + shape_str(image.shape()));
  }
  return patch_embed_.forward(patch_regroup(image, cfg_.patch_size));
}

FeatureGrid VisionEncoder::encode(const Tensor& image) const {
  std::size_t b = image.dim(0);
  std::size_t g = cfg_.patch_grid();
  FeatureGrid grid{b, g, g, cfg_.stage_dims[0], patchify(image)};

  for (const Stage& stage : stages_) {
    std::size_t w = cfg_.window_size;
    std::size_t shift = (grid.height > w) ? w / 2 : 0;
    for (const Block& blk : stage.blocks) {
      // Windowed MHSA sublayer, pre-norm with residual.
      FeatureGrid normed{grid.batch, grid.height, grid.width, grid.channels,
                         blk.ln1.forward(grid.values)};
      Tensor attn_out;
      if (blk.shifted && shift > 0) {
        FeatureGrid rolled = cyclic_shift(normed, -static_cast<int>(shift),
                                          -static_cast<int>(shift));
        Tensor mask = shifted_window_mask(grid.height, grid.width, w, shift, blk.attn.heads);
        Tensor wnd = window_attention(window_partition(rolled, w), blk.attn, &mask);
        FeatureGrid back = window_merge(wnd, b, grid.height, grid.width, w);
        attn_out = cyclic_shift(back, static_cast<int>(shift), static_cast<int>(shift)).values;
      } else {
        Tensor wnd = window_attention(window_partition(normed, w), blk.attn, nullptr);
        attn_out = window_merge(wnd, b, grid.height, grid.width, w).values;
      }
      grid.values = add(grid.values, attn_out);
      // MLP sublayer.
      Tensor h = blk.fc2.forward(gelu(blk.fc1.forward(blk.ln2.forward(grid.values))));
      grid.values = add(grid.values, h);
    }
    if (stage.has_merge) grid = patch_merge(grid, stage.merge_ln, stage.merge);
  }
  return grid;
}

void VisionEncoder::collect_params(ParamMap& pm, const std::string& prefix) const {
  patch_embed_.collect(pm, prefix + ".patch_embed");
  for (std::size_t s = 0; s < stages_.size(); ++s) {
    const Stage& stage = stages_[s];
    std::string sp = prefix + ".stage" + std::to_string(s);
    for (std::size_t d = 0; d < stage.blocks.size(); ++d) {
      const Block& blk = stage.blocks[d];
      std::string bp = sp + ".block" + std::to_string(d);
      blk.ln1.collect(pm, bp + ".ln1");
      blk.ln2.collect(pm, bp + ".ln2");
      blk.attn.collect(pm, bp + ".attn");
      blk.fc1.collect(pm, bp + ".fc1");
      blk.fc2.collect(pm, bp + ".fc2");
    }
    if (stage.has_merge) {
      stage.merge_ln.collect(pm, sp + ".merge_ln");
      stage.merge.collect(pm, sp + ".merge");
    }
  }
}

}  // namespace capgen
