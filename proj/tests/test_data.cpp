#include <cmath>
#include <filesystem>
#include <fstream>

#include "capgen/image.hpp"
#include "capgen/manifest.hpp"
#include "capgen/synthetic.hpp"
#include "capgen/tokenizer.hpp"
#include "doctest.h"

using namespace capgen;
namespace fs = std::filesystem;

namespace {

fs::path scratch_dir(const char* name) {
  fs::path dir = fs::temp_directory_path() / name;
  fs::create_directories(dir);
  return dir;
}

ImageBuffer gradient_image(std::size_t n, std::size_t channels) {
  ImageBuffer img;
  img.width = img.height = n;
  img.channels = channels;
  img.pixels.resize(n * n * channels);
  for (std::size_t y = 0; y < n; ++y)
    for (std::size_t x = 0; x < n; ++x)
      for (std::size_t c = 0; c < channels; ++c)
        img.at(y, x, c) = static_cast<std::uint8_t>((y * 13 + x * 7 + c * 31) % 256);
  return img;
}

AugmentConfig flip_only() {
  AugmentConfig cfg;
  cfg.prob = 1.0;
  cfg.max_rotation_deg = 0.0;
  cfg.factor_lo = cfg.factor_hi = 1.0;
  cfg.noise_sigma = 0.0;
  return cfg;
}

}  // namespace

TEST_CASE("pgm and ppm round-trip bit-exactly") {
  fs::path dir = scratch_dir("capgen_img_test");
  for (std::size_t channels : {std::size_t{1}, std::size_t{3}}) {
    ImageBuffer img = gradient_image(16, channels);
    std::string path = (dir / (channels == 1 ? "a.pgm" : "a.ppm")).string();
    save_pnm(path, img);
    ImageBuffer in = load_pnm(path);
    CHECK(in.width == 16);
    CHECK(in.channels == channels);
    CHECK(in.pixels == img.pixels);
  }
  fs::remove_all(dir);
}

TEST_CASE("pnm loader rejects bad input") {
  fs::path dir = scratch_dir("capgen_img_bad");
  CHECK_THROWS_AS(load_pnm((dir / "missing.pgm").string()), IoError);

  std::ofstream((dir / "ascii.pgm").string()) << "P2 2 2 255\n0 0 0 0\n";
  CHECK_THROWS_AS(load_pnm((dir / "ascii.pgm").string()), DataError);

  std::ofstream((dir / "short.pgm").string(), std::ios::binary) << "P5 4 4 255\nab";
  CHECK_THROWS_AS(load_pnm((dir / "short.pgm").string()), IoError);
  fs::remove_all(dir);
}

TEST_CASE("bilinear resize: same-size identity and constant preservation") {
  ImageBuffer img = gradient_image(12, 1);
  ImageBuffer same = resize_bilinear(img, 12, 12);
  CHECK(same.pixels == img.pixels);

  ImageBuffer flat;
  flat.width = flat.height = 8;
  flat.channels = 1;
  flat.pixels.assign(64, 77);
  ImageBuffer up = resize_bilinear(flat, 20, 20);
  for (std::uint8_t p : up.pixels) CHECK(p == 77);
  ImageBuffer down = resize_bilinear(flat, 3, 3);
  for (std::uint8_t p : down.pixels) CHECK(p == 77);
}

TEST_CASE("preprocessing replicates grayscale and normalizes per channel") {
  ImageBuffer gray;
  gray.width = gray.height = 8;
  gray.channels = 1;
  gray.pixels.assign(64, 128);
  Tensor t = preprocess_image(gray, 8);
  CHECK(t.shape() == Shape{3, 8, 8});
  double v = 128.0 / 255.0;
  const double mean[3] = {0.485, 0.456, 0.406};
  const double stds[3] = {0.229, 0.224, 0.225};
  for (std::size_t c = 0; c < 3; ++c)
    CHECK(t.data()[c * 64] == doctest::Approx((v - mean[c]) / stds[c]).epsilon(1e-12));

  ImageBuffer empty;
  CHECK_THROWS_AS(preprocess_image(empty, 8), DataError);
}

TEST_CASE("augmentation: zero probability is the identity") {
  ImageBuffer img = gradient_image(16, 1);
  Rng rng(3);
  AugmentConfig off;
  off.prob = 0.0;
  CHECK(augment(img, rng, off).pixels == img.pixels);
}

TEST_CASE("horizontal flip is an involution") {
  ImageBuffer img = gradient_image(16, 1);
  Rng r1(5), r2(5);
  ImageBuffer once = augment(img, r1, flip_only());
  CHECK(once.pixels != img.pixels);
  Rng r3(5);
  ImageBuffer twice = augment(once, r3, flip_only());
  CHECK(twice.pixels == img.pixels);
}

TEST_CASE("brightness clamps at the top of the range") {
  ImageBuffer img;
  img.width = img.height = 4;
  img.channels = 1;
  img.pixels.assign(16, 250);
  AugmentConfig cfg = flip_only();
  cfg.factor_lo = cfg.factor_hi = 1.2;
  Rng rng(1);
  ImageBuffer out = augment(img, rng, cfg);
  for (std::uint8_t p : out.pixels) CHECK(p == 255);
}

TEST_CASE("augmentation is seed-reproducible") {
  ImageBuffer img = gradient_image(24, 1);
  AugmentConfig cfg;  // all transforms active with default ranges
  Rng r1(99), r2(99);
  CHECK(augment(img, r1, cfg).pixels == augment(img, r2, cfg).pixels);
}

TEST_CASE("manifest loading reports malformed lines with numbers") {
  fs::path dir = scratch_dir("capgen_manifest");
  std::string path = (dir / "m.jsonl").string();
  {
    std::ofstream out(path);
    out << R"({"image_path":"a.pgm","caption":"a mass","article_id":"art1","modality":"CT"})"
        << "\n";
    out << "not json\n";
    out << R"({"image_path":"b.pgm","caption":"ok","article_id":""})" << "\n";
    out << R"({"image_path":"c.pgm","caption":"fine","article_id":"art2"})" << "\n";
  }
  ManifestLoad load = load_manifest(path);
  CHECK(load.entries.size() == 2);
  REQUIRE(load.errors.size() == 2);
  CHECK(load.errors[0].find("line 2") != std::string::npos);
  CHECK(load.errors[1].find("line 3") != std::string::npos);
  CHECK(load.entries[0].modality == "CT");

  CHECK_THROWS_AS(load_manifest(path, /*strict=*/true), DataError);
  CHECK_THROWS_AS(load_manifest((dir / "none.jsonl").string()), IoError);
  fs::remove_all(dir);
}

TEST_CASE("split assignment keeps whole articles together") {
  std::vector<ManifestEntry> entries;
  for (int a = 0; a < 1000; ++a)
    for (int i = 0; i < 2; ++i) {
      ManifestEntry e;
      e.image_path = "img.pgm";
      e.caption = "c";
      e.article_id = "art" + std::to_string(a);
      entries.push_back(e);
    }
  SplitAudit audit = assign_splits(entries, SplitRatios{}, 42);
  CHECK(audit.leak_free);
  CHECK(audit.articles == 1000);
  // Hash uniformity: split sizes within +/- 3% of the requested ratios.
  CHECK(std::fabs(static_cast<double>(audit.split_counts["train"]) / 2000.0 - 0.8) < 0.03);
  CHECK(std::fabs(static_cast<double>(audit.split_counts["val"]) / 2000.0 - 0.1) < 0.03);
  CHECK(std::fabs(static_cast<double>(audit.split_counts["test"]) / 2000.0 - 0.1) < 0.03);
  // Paired entries landed identically.
  for (std::size_t i = 0; i < entries.size(); i += 2) CHECK(entries[i].split == entries[i + 1].split);
}

TEST_CASE("pre-assigned cross-split article raises a leakage error naming it") {
  std::vector<ManifestEntry> entries(2);
  for (auto& e : entries) {
    e.image_path = "x.pgm";
    e.caption = "c";
    e.article_id = "artX";
  }
  entries[0].split = "train";
  entries[1].split = "val";
  CHECK_THROWS_WITH_AS(assign_splits(entries, SplitRatios{}, 1), doctest::Contains("artX"),
                       DataError);

  // audit_splits catches the same violation after the fact.
  CHECK_THROWS_WITH_AS(audit_splits(entries), doctest::Contains("artX"), DataError);
}

TEST_CASE("single-article corpus lands in one split regardless of ratios") {
  std::vector<ManifestEntry> entries(10);
  for (auto& e : entries) {
    e.image_path = "x.pgm";
    e.caption = "c";
    e.article_id = "only";
  }
  SplitAudit audit = assign_splits(entries, SplitRatios{}, 7);
  CHECK(audit.articles == 1);
  CHECK(audit.split_counts.size() == 1);
  CHECK(audit.split_counts.begin()->second == 10);
}

TEST_CASE("caption cleaning strips markers and lowercases") {
  CHECK(clean_caption("CT scan [fig 2] showing mass") == "ct scan showing mass");
  CHECK(clean_caption("Figure 3a. Large lesion (arrow)") == "large lesion");
  CHECK(clean_caption("already clean text") == "already clean text");
  CHECK(clean_caption("[all markup]") == "");
}

TEST_CASE("caption statistics quartile fixture") {
  std::vector<ManifestEntry> entries(3);
  entries[0].caption = "one";
  entries[1].caption = "one two";
  entries[2].caption = "one two three";
  CaptionStats s = caption_stats(entries);
  CHECK(s.mean == doctest::Approx(2.0));
  CHECK(s.median == doctest::Approx(2.0));
  CHECK(s.q1 == doctest::Approx(1.5));
  CHECK(s.q3 == doctest::Approx(2.5));

  std::vector<ManifestEntry> same(4);
  for (auto& e : same) e.caption = "a b c";
  CaptionStats t = caption_stats(same);
  CHECK(t.mean == t.median);
  CHECK(t.q3 - t.q1 == 0.0);
}

TEST_CASE("tokenizer: greedy longest match with continuation pieces") {
  TokenizerVocab vocab = TokenizerVocab::from_tokens(
      {"[PAD]", "[BOS]", "[EOS]", "[UNK]", "chest", "xray", "x", "##ray", "##ing"});
  std::size_t len = 0;
  std::vector<int> ids = tokenize("chest xray", vocab, 8, &len);
  CHECK(ids == std::vector<int>{1, 4, 5, 2, 0, 0, 0, 0});
  CHECK(len == 4);

  // Continuation: "xraying" = xray + ##ing.
  CHECK(tokenize("xraying", vocab, 6) == std::vector<int>{1, 5, 8, 2, 0, 0});
  CHECK(detokenize(tokenize("xraying", vocab, 6), vocab) == "xraying");

  CHECK(tokenize("", vocab, 5) == std::vector<int>{1, 2, 0, 0, 0});
  CHECK(tokenize("zzz", vocab, 5)[1] == TokenizerVocab::kUnk);
}

TEST_CASE("tokenizer output shape invariants") {
  TokenizerVocab vocab = synthetic_vocab();
  std::string longtext;
  for (int i = 0; i < 50; ++i) longtext += "circle square ";
  std::vector<int> ids = tokenize(longtext, vocab, 16);
  CHECK(ids.size() == 16);
  CHECK(ids.front() == TokenizerVocab::kBos);
  CHECK(ids.back() == TokenizerVocab::kEos);  // truncated, EOS preserved
  std::size_t bos = 0, eos = 0;
  for (int id : ids) {
    bos += id == TokenizerVocab::kBos;
    eos += id == TokenizerVocab::kEos;
  }
  CHECK(bos == 1);
  CHECK(eos == 1);

  std::vector<int> padded = tokenize("circle", vocab, 10);
  CHECK(padded.size() == 10);
  CHECK(detokenize(padded, vocab) == "circle");
}

TEST_CASE("vocabulary files: round trip and validation") {
  fs::path dir = scratch_dir("capgen_vocab");
  std::string path = (dir / "v.txt").string();
  TokenizerVocab vocab = synthetic_vocab();
  vocab.save(path);
  TokenizerVocab in = TokenizerVocab::load(path);
  CHECK(in.tokens == vocab.tokens);

  CHECK_THROWS_AS(TokenizerVocab::from_tokens({"[PAD]", "[BOS]", "[EOS]", "bad"}), DataError);
  CHECK_THROWS_AS(TokenizerVocab::from_tokens({"[PAD]", "[BOS]", "[EOS]", "[UNK]", "a", "a"}),
                  DataError);
  CHECK_THROWS_AS(TokenizerVocab::load((dir / "none.txt").string()), IoError);
  fs::remove_all(dir);
}

TEST_CASE("synthetic generator: modality mix, coverage, determinism") {
  SyntheticSpec spec;
  spec.count = 1000;
  std::vector<SyntheticSample> samples = generate_synthetic(spec);
  REQUIRE(samples.size() == 1000);
  std::size_t ct = 0, mri = 0, xray = 0;
  TokenizerVocab vocab = synthetic_vocab();
  for (const SyntheticSample& s : samples) {
    ct += s.modality == "CT";
    mri += s.modality == "MRI";
    xray += s.modality == "XRAY";
    // Every caption tokenizes without [UNK].
    for (int id : tokenize(s.caption, vocab, 16))
      CHECK(id != TokenizerVocab::kUnk);
    CHECK(s.caption.find(s.shape) != std::string::npos);
    CHECK(s.caption.find(s.position) != std::string::npos);
  }
  CHECK(std::fabs(static_cast<double>(ct) / 1000.0 - 0.4) < 0.05);
  CHECK(std::fabs(static_cast<double>(mri) / 1000.0 - 0.3) < 0.05);
  CHECK(std::fabs(static_cast<double>(xray) / 1000.0 - 0.3) < 0.05);

  std::vector<SyntheticSample> again = generate_synthetic(spec);
  CHECK(again[17].image.pixels == samples[17].image.pixels);
  CHECK(again[17].caption == samples[17].caption);
}

TEST_CASE("synthetic dataset writes a loadable corpus") {
  fs::path dir = scratch_dir("capgen_synth");
  SyntheticSpec spec;
  spec.count = 12;
  write_synthetic_dataset(dir.string(), spec);
  ManifestLoad load = load_manifest((dir / "manifest.jsonl").string(), /*strict=*/true);
  CHECK(load.entries.size() == 12);
  ImageBuffer img = load_pnm((dir / load.entries[0].image_path).string());
  CHECK(img.width == 32);
  CHECK(img.channels == 1);
  TokenizerVocab vocab = TokenizerVocab::load((dir / "vocab.txt").string());
  CHECK(vocab.size() == synthetic_vocab().size());
  fs::remove_all(dir);
}
