#pragma once

#include <string>
#include <vector>

#include "capgen/image.hpp"
#include "capgen/tokenizer.hpp"

namespace capgen {

// Shapes-as-findings generator: one bright geometric shape per image in one
// quadrant, with a modality-specific background level, and a templated
// caption naming modality, shape, and position.
struct SyntheticSpec {
  std::size_t count = 200;
  std::size_t image_size = 32;
  unsigned seed = 42;
  std::size_t images_per_article = 1;
};

struct SyntheticSample {
  ImageBuffer image;
  std::string caption;
  std::string modality;  // CT 40%, MRI 30%, XRAY 30%
  std::string article_id;
  std::string shape;     // circle | square | triangle | cross
  std::string position;  // upper left | upper right | lower left | lower right
};

std::vector<SyntheticSample> generate_synthetic(const SyntheticSpec& spec);

// Vocabulary covering every generated caption, specials first.
TokenizerVocab synthetic_vocab();

// Writes <dir>/img_<i>.pgm, <dir>/manifest.jsonl, and <dir>/vocab.txt.
void write_synthetic_dataset(const std::string& dir, const SyntheticSpec& spec);

}  // namespace capgen
