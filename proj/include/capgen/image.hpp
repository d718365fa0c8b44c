#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "capgen/rng.hpp"
#include "capgen/tensor.hpp"

namespace capgen {

// 8-bit raster, interleaved row-major; 1 (gray) or 3 (rgb) channels.
struct ImageBuffer {
  std::size_t width = 0, height = 0, channels = 1;
  std::vector<std::uint8_t> pixels;

  std::uint8_t at(std::size_t y, std::size_t x, std::size_t c) const {
    return pixels[(y * width + x) * channels + c];
  }
  std::uint8_t& at(std::size_t y, std::size_t x, std::size_t c) {
    return pixels[(y * width + x) * channels + c];
  }
};

// Binary PGM (P5) / PPM (P6) only; comment lines tolerated, maxval 255.
ImageBuffer load_pnm(const std::string& path);
void save_pnm(const std::string& path, const ImageBuffer& img);

ImageBuffer resize_bilinear(const ImageBuffer& img, std::size_t width, std::size_t height);

// Bilinear resize to size x size, grayscale replicated to 3 channels, then
// per-channel ImageNet normalization: means (0.485,0.456,0.406), stds
// (0.229,0.224,0.225) over pixels scaled to [0,1].
Tensor preprocess_image(const ImageBuffer& img, std::size_t size);

struct AugmentConfig {
  double prob = 0.5;  // independent application chance per transform
  double max_rotation_deg = 10.0;
  double factor_lo = 0.8, factor_hi = 1.2;  // brightness and contrast range
  double noise_sigma = 0.02;                // fraction of the 0..255 range
};

// Order: flip, rotation (bilinear, edge padded), brightness, contrast,
// Gaussian noise; each drawn from the shared stream so runs reproduce.
ImageBuffer augment(const ImageBuffer& img, Rng& rng, const AugmentConfig& cfg);

}  // namespace capgen
