#include <cmath>

#include "capgen/encoder.hpp"
#include "capgen/grad_check.hpp"
#include "doctest.h"

using namespace capgen;

namespace {

Tensor random_tensor(Shape shape, Rng& rng, double lo = -1.0, double hi = 1.0) {
  Tensor t(std::move(shape));
  for (std::size_t i = 0; i < t.size(); ++i) t.data()[i] = rng.uniform(lo, hi);
  return t;
}

FeatureGrid make_grid(std::size_t b, std::size_t h, std::size_t w, std::size_t c, Rng& rng) {
  return FeatureGrid{b, h, w, c, random_tensor({b, h * w, c}, rng)};
}

}  // namespace

TEST_CASE("patch_regroup counts and symmetry") {
  Rng rng(1);
  Tensor img8 = random_tensor({1, 3, 8, 8}, rng);
  Tensor p = patch_regroup(img8, 4);
  CHECK(p.shape() == Shape{1, 4, 48});

  // Constant image: every patch vector identical, so any linear embedding
  // of the patches is identical too.
  Tensor cimg = Tensor::full({1, 3, 8, 8}, 0.7);
  Tensor cp = patch_regroup(cimg, 4);
  for (std::size_t i = 0; i < 4; ++i)
    for (std::size_t j = 0; j < 48; ++j) CHECK(cp.data()[i * 48 + j] == cp.data()[j]);
}

TEST_CASE("toy patchify yields 64 patches of stage-0 dim") {
  Rng rng(2);
  VisionEncoder enc(EncoderConfig::toy(), rng);
  Tensor img = random_tensor({1, 3, 32, 32}, rng);
  Tensor p = enc.patchify(img);
  CHECK(p.shape() == Shape{1, 64, 32});
}

TEST_CASE("window partition and merge are inverse bijections") {
  Rng rng(3);
  FeatureGrid g = make_grid(2, 4, 4, 5, rng);
  Tensor w = window_partition(g, 2);
  CHECK(w.shape() == Shape{2 * 4, 4, 5});
  FeatureGrid back = window_merge(w, 2, 4, 4, 2);
  CHECK(back.values.vec() == g.values.vec());

  FeatureGrid g8 = make_grid(1, 8, 8, 3, rng);
  Tensor w8 = window_partition(g8, 4);
  CHECK(w8.shape() == Shape{4, 16, 3});

  FeatureGrid odd = make_grid(1, 6, 6, 3, rng);
  CHECK_THROWS_AS(window_partition(odd, 4), ConfigError);
}

TEST_CASE("cyclic_shift rolls and inverts") {
  Rng rng(4);
  FeatureGrid g = make_grid(1, 2, 2, 1, rng);
  FeatureGrid same = cyclic_shift(g, 0, 0);
  CHECK(same.values.vec() == g.values.vec());

  // 2x2, shift (1,1): each position picks its diagonal neighbor.
  FeatureGrid d = cyclic_shift(g, 1, 1);
  CHECK(d.values.data()[0] == g.values.data()[3]);
  CHECK(d.values.data()[1] == g.values.data()[2]);
  CHECK(d.values.data()[2] == g.values.data()[1]);
  CHECK(d.values.data()[3] == g.values.data()[0]);

  FeatureGrid big = make_grid(2, 6, 4, 3, rng);
  FeatureGrid round = cyclic_shift(cyclic_shift(big, 2, -1), -2, 1);
  CHECK(round.values.vec() == big.values.vec());
}

TEST_CASE("window_attention singleton and uniform cases") {
  Rng rng(5);
  AttentionParams p;
  p.init(6, 2, rng);

  // One token per window: softmax over a single logit is 1, so the output
  // is the value path followed by the output projection.
  Tensor x = random_tensor({3, 1, 6}, rng);
  Tensor out = window_attention(x, p, nullptr);
  Tensor expect = p.o.forward(p.v.forward(x));
  for (std::size_t i = 0; i < out.size(); ++i)
    CHECK(out.data()[i] == doctest::Approx(expect.data()[i]).epsilon(1e-12));

  // Zero Q/K projections make all scores equal: attention averages the
  // value-projected tokens.
  AttentionParams pu;
  pu.init(6, 2, rng);
  std::fill(pu.q.w.vec().begin(), pu.q.w.vec().end(), 0.0);
  std::fill(pu.k.w.vec().begin(), pu.k.w.vec().end(), 0.0);
  Tensor xs = random_tensor({1, 4, 6}, rng);
  Tensor ou = window_attention(xs, pu, nullptr);
  Tensor vp = pu.v.forward(xs);
  Tensor avg({1, 1, 6});
  for (std::size_t c = 0; c < 6; ++c) {
    double s = 0.0;
    for (std::size_t t = 0; t < 4; ++t) s += vp.data()[t * 6 + c];
    avg.data()[c] = s / 4.0;
  }
  Tensor oexp = pu.o.forward(avg);
  for (std::size_t t = 0; t < 4; ++t)
    for (std::size_t c = 0; c < 6; ++c)
      CHECK(ou.data()[t * 6 + c] == doctest::Approx(oexp.data()[c]).epsilon(1e-12));
}

TEST_CASE("heads must divide channels") {
  Rng rng(6);
  AttentionParams p;
  p.init(6, 2, rng);
  p.heads = 4;
  Tensor x = random_tensor({1, 3, 6}, rng);
  CHECK_THROWS_AS(window_attention(x, p, nullptr), ConfigError);
}

TEST_CASE("gradient check through a windowed attention block") {
  Rng rng(7);
  AttentionParams p;
  p.init(4, 2, rng);
  Tensor x = random_tensor({2, 4, 4}, rng);
  auto f = [&]() {
    Tensor y = window_attention(x, p, nullptr);
    return sum(mul(y, y));
  };
  auto rep = grad_check(f, {x, p.q.w, p.k.w, p.v.w, p.o.w, p.o.b}, 1e-5, 150, rng);
  CHECK(rep.max_rel_err < 1e-4);
}

TEST_CASE("shifted window mask blocks wrapped pairs exactly") {
  Tensor mask = shifted_window_mask(4, 4, 2, 1, 1);
  CHECK(mask.shape() == Shape{4, 1, 4, 4});
  // Window 0 sits in the grid interior: fully unmasked.
  for (std::size_t i = 0; i < 16; ++i) CHECK(mask.data()[i] == 0.0);
  // Bottom-right window mixes wrapped rows and columns; its mask must
  // contain blocked pairs, and blocking is symmetric.
  const double* m3 = mask.data() + 3 * 16;
  int blocked = 0;
  for (std::size_t i = 0; i < 4; ++i)
    for (std::size_t j = 0; j < 4; ++j) {
      if (m3[i * 4 + j] == -1e30) {
        ++blocked;
        CHECK(m3[j * 4 + i] == -1e30);
      }
      if (i == j) CHECK(m3[i * 4 + j] == 0.0);
    }
  CHECK(blocked > 0);

  // A -1e30 logit really produces an exactly-zero attention weight.
  Tensor logits({2}, {0.0, -1e30});
  Tensor w = softmax(logits, 0);
  CHECK(w.data()[0] == 1.0);
  CHECK(w.data()[1] == 0.0);
}

TEST_CASE("masked window attention ignores blocked tokens") {
  Rng rng(8);
  AttentionParams p;
  p.init(4, 1, rng);
  // Two tokens, second masked away from the first: row 0 of the output
  // must equal singleton attention on token 0.
  Tensor x = random_tensor({1, 2, 4}, rng);
  Tensor mask({2, 2}, {0.0, -1e30, -1e30, 0.0});
  Tensor out = window_attention(x, p, &mask);
  Tensor vp = p.o.forward(p.v.forward(x));
  for (std::size_t c = 0; c < 4; ++c)
    CHECK(out.data()[c] == doctest::Approx(vp.data()[c]).epsilon(1e-12));
}

TEST_CASE("patch_merge halves the grid and doubles channels") {
  Rng rng(9);
  FeatureGrid g = make_grid(1, 4, 4, 3, rng);
  LayerNormParams ln;
  ln.init(12);
  Linear red;
  red.init(12, 6, rng);
  FeatureGrid out = patch_merge(g, ln, red);
  CHECK(out.height == 2);
  CHECK(out.width == 2);
  CHECK(out.channels == 6);
  CHECK(out.values.shape() == Shape{1, 4, 6});

  FeatureGrid odd = make_grid(1, 3, 3, 2, rng);
  CHECK_THROWS_AS(patch_merge(odd, ln, red), ConfigError);
}

TEST_CASE("paper config arithmetic gives the 7x7x1024 grid") {
  EncoderConfig cfg = EncoderConfig::paper_shape();
  cfg.validate();
  CHECK(cfg.patch_grid() == 56);
  CHECK(cfg.final_grid() == 7);
  CHECK(cfg.final_channels() == 1024);
  CHECK(cfg.regions() == 49);
}

TEST_CASE("toy encode emits a 4x4x64 grid deterministically") {
  Rng rng(10);
  VisionEncoder enc(EncoderConfig::toy(), rng);
  Tensor img = random_tensor({1, 3, 32, 32}, rng);
  FeatureGrid g1 = enc.encode(img);
  CHECK(g1.height == 4);
  CHECK(g1.width == 4);
  CHECK(g1.channels == 64);
  CHECK(g1.values.shape() == Shape{1, 16, 64});

  FeatureGrid g2 = enc.encode(img);
  CHECK(g1.values.vec() == g2.values.vec());

  // Same seed, fresh encoder: bit-identical output.
  Rng rng2(10);
  VisionEncoder enc2(EncoderConfig::toy(), rng2);
  FeatureGrid g3 = enc2.encode(img);
  CHECK(g1.values.vec() == g3.values.vec());
}

TEST_CASE("encoder config validation") {
  EncoderConfig bad = EncoderConfig::toy();
  bad.window_size = 3;
  CHECK_THROWS_AS(bad.validate(), ConfigError);

  EncoderConfig bad2 = EncoderConfig::toy();
  bad2.image_size = 30;
  CHECK_THROWS_AS(bad2.validate(), ConfigError);
}

TEST_CASE("gradient flows end to end through the toy encoder") {
  Rng rng(11);
  EncoderConfig cfg = EncoderConfig::toy();
  cfg.image_size = 16;  // 4x4 patches, one merge to 2x2
  cfg.window_size = 2;
  VisionEncoder enc(cfg, rng);
  Tensor img = random_tensor({1, 3, 16, 16}, rng);
  img.set_requires_grad(true);
  Tape tape;
  {
    TapeScope scope(tape);
    FeatureGrid g = enc.encode(img);
    Tensor loss = sum(mul(g.values, g.values));
    tape.backward(loss);
  }
  REQUIRE(img.has_grad());
  double norm = 0.0;
  for (double v : img.grad()) norm += v * v;
  CHECK(norm > 0.0);
}
