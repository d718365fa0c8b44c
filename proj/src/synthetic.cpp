#include "capgen/synthetic.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>

#include <nlohmann/json.hpp>

namespace capgen {

namespace {

const char* kShapes[] = {"circle", "square", "triangle", "cross"};
const char* kPositions[] = {"upper left", "upper right", "lower left", "lower right"};

bool inside_shape(const std::string& shape, double dy, double dx, double r) {
  if (shape == "circle") return dy * dy + dx * dx <= r * r;
  if (shape == "square") return std::fabs(dy) <= r && std::fabs(dx) <= r;
  if (shape == "triangle") return dy >= -r && dy <= r && std::fabs(dx) <= (dy + r) / 2.0;
  // cross
  return (std::fabs(dx) <= 1.5 && std::fabs(dy) <= r) ||
         (std::fabs(dy) <= 1.5 && std::fabs(dx) <= r);
}

}  // namespace

std::vector<SyntheticSample> generate_synthetic(const SyntheticSpec& spec) {
  if (spec.count == 0 || spec.image_size < 8) throw ConfigError("synthetic: count and size too small");
  if (spec.images_per_article == 0) throw ConfigError("synthetic: images_per_article must be >= 1");
  Rng rng(spec.seed);
  std::vector<SyntheticSample> out;
  out.reserve(spec.count);

  for (std::size_t i = 0; i < spec.count; ++i) {
    SyntheticSample s;
    double u = rng.uniform();
    // 40/30/30 modality mix; each modality has a distinct background level
    // so it is recoverable from pixels.
    double background;
    if (u < 0.4) {
      s.modality = "CT";
      background = 25.0;
    } else if (u < 0.7) {
      s.modality = "MRI";
      background = 70.0;
    } else {
      s.modality = "XRAY";
      background = 115.0;
    }
    std::size_t shape_idx = rng.below(4);
    std::size_t pos_idx = rng.below(4);
    s.shape = kShapes[shape_idx];
    s.position = kPositions[pos_idx];
    s.article_id = "art" + std::to_string(i / spec.images_per_article);

    std::string mod_word = s.modality == "CT" ? "ct" : (s.modality == "MRI" ? "mri" : "xray");
    s.caption = mod_word + " image shows a " + s.shape + " in the " + s.position + " region";

    std::size_t n = spec.image_size;
    s.image.width = s.image.height = n;
    s.image.channels = 1;
    s.image.pixels.resize(n * n);
    double q = static_cast<double>(n) / 4.0;  // quadrant center offset
    double cy = (pos_idx / 2 == 0) ? q : 3.0 * q;
    double cx = (pos_idx % 2 == 0) ? q : 3.0 * q;
    double r = q * 0.7;
    for (std::size_t y = 0; y < n; ++y)
      for (std::size_t x = 0; x < n; ++x) {
        double v = background + 8.0 * rng.uniform();  // light texture
        if (inside_shape(s.shape, static_cast<double>(y) - cy, static_cast<double>(x) - cx, r))
          v = 225.0 + 20.0 * rng.uniform();
        s.image.pixels[y * n + x] =
            static_cast<std::uint8_t>(std::min(255.0, std::max(0.0, v)));
      }
    out.push_back(std::move(s));
  }
  return out;
}

TokenizerVocab synthetic_vocab() {
  std::vector<std::string> tokens{
      TokenizerVocab::pad_token(), TokenizerVocab::bos_token(), TokenizerVocab::eos_token(),
      TokenizerVocab::unk_token(),
      "ct", "mri", "xray", "image", "shows", "a", "in", "the", "region",
      "circle", "square", "triangle", "cross", "upper", "lower", "left", "right"};
  return TokenizerVocab::from_tokens(std::move(tokens));
}

void write_synthetic_dataset(const std::string& dir, const SyntheticSpec& spec) {
  std::filesystem::create_directories(dir);
  std::vector<SyntheticSample> samples = generate_synthetic(spec);
  std::ofstream manifest(dir + "/manifest.jsonl");
  if (!manifest) throw IoError("cannot write manifest in " + dir);
  for (std::size_t i = 0; i < samples.size(); ++i) {
    std::string name = "img_" + std::to_string(i) + ".pgm";
    save_pnm(dir + "/" + name, samples[i].image);
    nlohmann::json j{{"image_path", name},
                     {"caption", samples[i].caption},
                     {"article_id", samples[i].article_id},
                     {"modality", samples[i].modality}};
    manifest << j.dump() << "\n";
  }
  synthetic_vocab().save(dir + "/vocab.txt");
}

}  // namespace capgen
