#include <cmath>

#include "capgen/grad_check.hpp"
#include "capgen/regional.hpp"
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

Tensor uniform_alpha(std::size_t b, std::size_t n) {
  return Tensor::full({b, n}, 1.0 / static_cast<double>(n));
}

}  // namespace

TEST_CASE("region_scores: zero parameters give uniform weights") {
  Rng rng(1);
  FeatureGrid g = make_grid(2, 4, 4, 8, rng);
  RegionalConfig cfg{8, 4, 4, RegionalMode::reweight, 0.0};
  RegionalAttentionParams p;
  p.init(cfg, rng);
  std::fill(p.score_w.vec().begin(), p.score_w.vec().end(), 0.0);
  Tensor a = region_scores(g, p);
  CHECK(a.shape() == Shape{2, 16});
  for (std::size_t i = 0; i < a.size(); ++i)
    CHECK(a.data()[i] == doctest::Approx(1.0 / 16).epsilon(1e-14));
}

TEST_CASE("region_scores: ln2 margin gives alpha_j = 2/(N+1)") {
  std::size_t n = 16, c = 8;
  FeatureGrid g{1, 4, 4, c, Tensor({1, n, c})};
  std::size_t j = 5;
  g.values.data()[j * c + 0] = 1.0;  // channel 0 marks region j
  RegionalConfig cfg{c, 4, 4, RegionalMode::reweight, 0.0};
  Rng rng(2);
  RegionalAttentionParams p;
  p.init(cfg, rng);
  std::fill(p.score_w.vec().begin(), p.score_w.vec().end(), 0.0);
  p.score_w.data()[0] = std::log(2.0);  // region j logit = ln2, rest 0
  Tensor a = region_scores(g, p);
  CHECK(a.data()[j] == doctest::Approx(2.0 / (n + 1)).epsilon(1e-12));
  for (std::size_t i = 0; i < n; ++i)
    if (i != j) CHECK(a.data()[i] == doctest::Approx(1.0 / (n + 1)).epsilon(1e-12));
}

TEST_CASE("region_scores rows always sum to one") {
  Rng rng(3);
  RegionalConfig cfg{8, 4, 4, RegionalMode::reweight, 0.0};
  RegionalAttentionParams p;
  p.init(cfg, rng);
  for (int trial = 0; trial < 100; ++trial) {
    FeatureGrid g = make_grid(2, 4, 4, 8, rng);
    Tensor a = region_scores(g, p);
    for (std::size_t b = 0; b < 2; ++b) {
      double s = 0.0;
      for (std::size_t i = 0; i < 16; ++i) {
        CHECK(a.data()[b * 16 + i] >= 0.0);
        s += a.data()[b * 16 + i];
      }
      CHECK(std::fabs(s - 1.0) <= 1e-12);
    }
  }
}

TEST_CASE("region_scores channel mismatch") {
  Rng rng(4);
  RegionalConfig cfg{8, 4, 4, RegionalMode::reweight, 0.0};
  RegionalAttentionParams p;
  p.init(cfg, rng);
  FeatureGrid g = make_grid(1, 2, 2, 6, rng);
  CHECK_THROWS_AS(region_scores(g, p), ShapeError);
}

TEST_CASE("attend reweight with uniform alpha is the exact identity") {
  Rng rng(5);
  FeatureGrid g = make_grid(2, 4, 4, 8, rng);
  Tensor out = attend(g, uniform_alpha(2, 16), RegionalMode::reweight);
  CHECK(out.vec() == g.values.vec());
}

TEST_CASE("attend collapse with one-hot alpha broadcasts region j") {
  Rng rng(6);
  FeatureGrid g = make_grid(1, 2, 2, 3, rng);
  Tensor a({1, 4});
  a.data()[2] = 1.0;
  Tensor out = attend(g, a, RegionalMode::collapse);
  for (std::size_t i = 0; i < 4; ++i)
    for (std::size_t c = 0; c < 3; ++c)
      CHECK(out.data()[i * 3 + c] == doctest::Approx(g.values.data()[2 * 3 + c]).epsilon(1e-15));
}

TEST_CASE("attend collapse equals the brute-force weighted sum") {
  Rng rng(7);
  for (int trial = 0; trial < 20; ++trial) {
    FeatureGrid g = make_grid(2, 3, 3, 5, rng);
    // Random normalized alpha.
    Tensor a({2, 9});
    for (std::size_t b = 0; b < 2; ++b) {
      double s = 0.0;
      for (std::size_t i = 0; i < 9; ++i) {
        a.data()[b * 9 + i] = rng.uniform(0.01, 1.0);
        s += a.data()[b * 9 + i];
      }
      for (std::size_t i = 0; i < 9; ++i) a.data()[b * 9 + i] /= s;
    }
    Tensor out = attend(g, a, RegionalMode::collapse);
    for (std::size_t b = 0; b < 2; ++b)
      for (std::size_t c = 0; c < 5; ++c) {
        double expect = 0.0;
        for (std::size_t i = 0; i < 9; ++i)
          expect += a.data()[b * 9 + i] * g.values.data()[(b * 9 + i) * 5 + c];
        for (std::size_t i = 0; i < 9; ++i)
          CHECK(std::fabs(out.data()[(b * 9 + i) * 5 + c] - expect) <= 1e-12);
      }
  }
}

TEST_CASE("attend rejects unnormalized alpha") {
  Rng rng(8);
  FeatureGrid g = make_grid(1, 2, 2, 3, rng);
  Tensor a = Tensor::full({1, 4}, 0.3);
  CHECK_THROWS_AS(attend(g, a, RegionalMode::reweight), ContractError);
}

TEST_CASE("alpha argmax is invariant to constant logit shifts") {
  Rng rng(9);
  RegionalConfig cfg{6, 4, 4, RegionalMode::reweight, 0.0};
  RegionalAttentionParams p;
  p.init(cfg, rng);
  FeatureGrid g = make_grid(1, 2, 2, 6, rng);
  Tensor a1 = region_scores(g, p);
  RegionalAttentionParams p2 = p;
  p2.score_b = Tensor({1}, {7.5});  // shift every logit
  Tensor a2 = region_scores(g, p2);
  auto argmax = [](const Tensor& t) {
    std::size_t best = 0;
    for (std::size_t i = 1; i < t.size(); ++i)
      if (t.data()[i] > t.data()[best]) best = i;
    return best;
  };
  CHECK(argmax(a1) == argmax(a2));
}

TEST_CASE("projection identity and zero cases") {
  Rng rng(10);
  std::size_t c = 5;
  RegionalConfig cfg{c, c, 4, RegionalMode::reweight, 0.0};
  RegionalAttentionParams p;
  p.init(cfg, rng);
  // Identity W_p with D == C, eval mode.
  std::fill(p.proj.w.vec().begin(), p.proj.w.vec().end(), 0.0);
  std::fill(p.proj.b.vec().begin(), p.proj.b.vec().end(), 0.0);
  for (std::size_t i = 0; i < c; ++i) p.proj.w.data()[i * c + i] = 1.0;
  Tensor x = random_tensor({1, 4, c}, rng);
  Tensor y = p.proj.forward(x);
  CHECK(y.vec() == x.vec());

  std::fill(p.proj.w.vec().begin(), p.proj.w.vec().end(), 0.0);
  Tensor z = p.proj.forward(x);
  for (double v : z.vec()) CHECK(v == 0.0);
}

TEST_CASE("projection gradient check on toy dims") {
  Rng rng(11);
  RegionalConfig cfg{6, 3, 2, RegionalMode::reweight, 0.0};
  RegionalAttentionParams p;
  p.init(cfg, rng);
  Tensor x = random_tensor({2, 4, 6}, rng);
  auto f = [&]() {
    Tensor y = p.proj.forward(x);
    return sum(mul(y, y));
  };
  auto rep = grad_check(f, {x, p.proj.w, p.proj.b}, 1e-5, 120, rng);
  CHECK(rep.max_rel_err < 1e-5);
}

TEST_CASE("adaptive_pool even split and identity") {
  Tensor seq({1, 4, 2}, {1, 10, 3, 30, 5, 50, 7, 70});
  Tensor out = adaptive_pool(seq, 2);
  CHECK(out.shape() == Shape{1, 2, 2});
  CHECK(out.data()[0] == doctest::Approx(2.0));
  CHECK(out.data()[1] == doctest::Approx(20.0));
  CHECK(out.data()[2] == doctest::Approx(6.0));
  CHECK(out.data()[3] == doctest::Approx(60.0));

  Tensor id = adaptive_pool(seq, 4);
  CHECK(id.vec() == seq.vec());

  CHECK_THROWS_AS(adaptive_pool(seq, 5), ConfigError);
}

TEST_CASE("pool_bins N=49 K=29 match the direct enumeration oracle") {
  std::size_t n = 49, k = 29;
  auto bins = pool_bins(n, k);
  REQUIRE(bins.size() == k);
  std::vector<int> covered(n, 0);
  for (std::size_t i = 0; i < k; ++i) {
    // Independent floating-point enumeration of the same rule.
    auto lo = static_cast<std::size_t>(std::floor(double(i) * double(n) / double(k)));
    auto hi = static_cast<std::size_t>(std::ceil(double(i + 1) * double(n) / double(k)));
    CHECK(bins[i].first == lo);
    CHECK(bins[i].second == hi);
    CHECK(lo < hi);
    for (std::size_t j = lo; j < hi; ++j) covered[j] = 1;
    if (i > 0) CHECK(bins[i].first >= bins[i - 1].first);  // monotone coverage
  }
  for (std::size_t j = 0; j < n; ++j) CHECK(covered[j] == 1);
}

TEST_CASE("adaptive_pool conserves the bin-size-weighted mean") {
  Rng rng(12);
  for (auto [n, k] : std::vector<std::pair<std::size_t, std::size_t>>{{8, 4}, {49, 29}, {16, 5}}) {
    Tensor seq = random_tensor({1, n, 1}, rng);
    Tensor out = adaptive_pool(seq, k);
    auto bins = pool_bins(n, k);
    // Sum over bins of size*mean must equal the sum over covered inputs
    // (with multiplicity for overlapping bins).
    double lhs = 0.0, rhs = 0.0;
    for (std::size_t i = 0; i < k; ++i) {
      lhs += static_cast<double>(bins[i].second - bins[i].first) * out.data()[i];
      for (std::size_t j = bins[i].first; j < bins[i].second; ++j) rhs += seq.data()[j];
    }
    CHECK(lhs == doctest::Approx(rhs).epsilon(1e-12));
    // Exact global-mean conservation when K divides N.
    if (n % k == 0) {
      double mi = 0.0, mo = 0.0;
      for (std::size_t j = 0; j < n; ++j) mi += seq.data()[j];
      for (std::size_t i = 0; i < k; ++i) mo += out.data()[i];
      CHECK(mi / double(n) == doctest::Approx(mo / double(k)).epsilon(1e-12));
    }
  }
}

TEST_CASE("regional_forward toy dims and ablation bypass") {
  Rng rng(13);
  RegionalConfig cfg{64, 32, 8, RegionalMode::reweight, 0.0};
  RegionalAttentionParams p;
  p.init(cfg, rng);
  FeatureGrid g = make_grid(1, 4, 4, 64, rng);
  Rng drop(1);
  auto out = regional_forward(g, p, cfg, drop, false);
  CHECK(out.alpha.shape() == Shape{1, 16});
  CHECK(out.attended.shape() == Shape{1, 16, 64});
  CHECK(out.projected.shape() == Shape{1, 16, 32});
  CHECK(out.pooled.shape() == Shape{1, 8, 32});

  RegionalConfig off = cfg;
  off.mode = RegionalMode::off;
  auto bypass = regional_forward(g, p, off, drop, false);
  for (double v : bypass.alpha.vec()) CHECK(v == doctest::Approx(1.0 / 16));
  Tensor direct = adaptive_pool(p.proj.forward(g.values), 8);
  CHECK(bypass.pooled.vec() == direct.vec());
  // Uniform-reweight and off arms coincide on the pooled output when the
  // learned weights happen to be uniform.
  std::fill(p.score_w.vec().begin(), p.score_w.vec().end(), 0.0);
  auto uni = regional_forward(g, p, cfg, drop, false);
  for (std::size_t i = 0; i < uni.pooled.size(); ++i)
    CHECK(uni.pooled.data()[i] == doctest::Approx(bypass.pooled.data()[i]).epsilon(1e-12));
}

TEST_CASE("regional_forward gradient check through score path") {
  Rng rng(14);
  RegionalConfig cfg{6, 4, 3, RegionalMode::reweight, 0.0};
  RegionalAttentionParams p;
  p.init(cfg, rng);
  FeatureGrid g = make_grid(1, 2, 2, 6, rng);
  Rng drop(1);
  auto f = [&]() {
    auto out = regional_forward(g, p, cfg, drop, false);
    return sum(mul(out.pooled, out.pooled));
  };
  auto rep = grad_check(f, {g.values, p.score_w, p.score_b, p.proj.w, p.proj.b}, 1e-5, 150, rng);
  CHECK(rep.max_rel_err < 1e-4);

  cfg.mode = RegionalMode::collapse;
  auto rep2 = grad_check(f, {g.values, p.score_w, p.score_b}, 1e-5, 80, rng);
  CHECK(rep2.max_rel_err < 1e-4);
}
