#include "capgen/image.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

namespace capgen {

namespace {

// Skips whitespace and '#' comment lines between header fields.
int next_header_int(std::istream& in) {
  for (;;) {
    int c = in.peek();
    if (c == '#') {
      std::string line;
      std::getline(in, line);
    } else if (std::isspace(c)) {
      in.get();
    } else {
      break;
    }
  }
  int v;
  if (!(in >> v)) throw IoError("truncated pnm header");
  return v;
}

std::uint8_t clamp_u8(double v) {
  return static_cast<std::uint8_t>(std::min(255.0, std::max(0.0, std::round(v))));
}

// Bilinear sample with edge padding at fractional coordinates.
double sample_edge(const ImageBuffer& img, double y, double x, std::size_t c) {
  double yc = std::min(std::max(y, 0.0), static_cast<double>(img.height - 1));
  double xc = std::min(std::max(x, 0.0), static_cast<double>(img.width - 1));
  std::size_t y0 = static_cast<std::size_t>(yc), x0 = static_cast<std::size_t>(xc);
  std::size_t y1 = std::min(y0 + 1, img.height - 1), x1 = std::min(x0 + 1, img.width - 1);
  double fy = yc - static_cast<double>(y0), fx = xc - static_cast<double>(x0);
  double top = (1 - fx) * img.at(y0, x0, c) + fx * img.at(y0, x1, c);
  double bot = (1 - fx) * img.at(y1, x0, c) + fx * img.at(y1, x1, c);
  return (1 - fy) * top + fy * bot;
}

}  // namespace

ImageBuffer load_pnm(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open image: " + path);
  std::string magic;
  in >> magic;
  ImageBuffer img;
  if (magic == "P5") {
    img.channels = 1;
  } else if (magic == "P6") {
    img.channels = 3;
  } else {
    throw DataError("unsupported image format '" + magic + "' in " + path +
                    " (binary PGM/PPM only)");
  }
  int w = next_header_int(in), h = next_header_int(in), maxval = next_header_int(in);
  if (w <= 0 || h <= 0) throw DataError("invalid image dimensions in " + path);
  if (maxval != 255) throw DataError("unsupported maxval " + std::to_string(maxval) + " in " + path);
  in.get();  // single whitespace after maxval
  img.width = static_cast<std::size_t>(w);
  img.height = static_cast<std::size_t>(h);
  img.pixels.resize(img.width * img.height * img.channels);
  in.read(reinterpret_cast<char*>(img.pixels.data()), static_cast<long>(img.pixels.size()));
  if (in.gcount() != static_cast<long>(img.pixels.size()))
    throw IoError("truncated pixel data in " + path);
  return img;
}

void save_pnm(const std::string& path, const ImageBuffer& img) {
  if (img.channels != 1 && img.channels != 3)
    throw ContractError("save_pnm: 1 or 3 channels required");
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write image: " + path);
  out << (img.channels == 1 ? "P5" : "P6") << " " << img.width << " " << img.height << " 255\n";
  out.write(reinterpret_cast<const char*>(img.pixels.data()), static_cast<long>(img.pixels.size()));
}

ImageBuffer resize_bilinear(const ImageBuffer& img, std::size_t width, std::size_t height) {
  if (img.width == 0 || img.height == 0) throw DataError("resize of empty image");
  ImageBuffer out;
  out.width = width;
  out.height = height;
  out.channels = img.channels;
  out.pixels.resize(width * height * img.channels);
  double sy = static_cast<double>(img.height) / static_cast<double>(height);
  double sx = static_cast<double>(img.width) / static_cast<double>(width);
  for (std::size_t y = 0; y < height; ++y) {
    // Pixel-center alignment so identical sizes resample bit-exactly.
    double src_y = (static_cast<double>(y) + 0.5) * sy - 0.5;
    for (std::size_t x = 0; x < width; ++x) {
      double src_x = (static_cast<double>(x) + 0.5) * sx - 0.5;
      for (std::size_t c = 0; c < img.channels; ++c)
        out.at(y, x, c) = clamp_u8(sample_edge(img, src_y, src_x, c));
    }
  }
  return out;
}

Tensor preprocess_image(const ImageBuffer& img, std::size_t size) {
  if (img.width == 0 || img.height == 0) throw DataError("preprocess of empty image");
  ImageBuffer r = (img.width == size && img.height == size) ? img : resize_bilinear(img, size, size);
  static const double kMean[3] = {0.485, 0.456, 0.406};
  static const double kStd[3] = {0.229, 0.224, 0.225};
  Tensor out({3, size, size});
  for (std::size_t c = 0; c < 3; ++c) {
    std::size_t src_c = r.channels == 3 ? c : 0;  // replicate grayscale
    for (std::size_t y = 0; y < size; ++y)
      for (std::size_t x = 0; x < size; ++x) {
        double v = static_cast<double>(r.at(y, x, src_c)) / 255.0;
        out.data()[(c * size + y) * size + x] = (v - kMean[c]) / kStd[c];
      }
  }
  return out;
}

ImageBuffer augment(const ImageBuffer& img, Rng& rng, const AugmentConfig& cfg) {
  ImageBuffer out = img;

  if (rng.uniform() < cfg.prob) {  // horizontal flip
    for (std::size_t y = 0; y < out.height; ++y)
      for (std::size_t x = 0; x < out.width / 2; ++x)
        for (std::size_t c = 0; c < out.channels; ++c)
          std::swap(out.at(y, x, c), out.at(y, out.width - 1 - x, c));
  }

  if (rng.uniform() < cfg.prob) {  // rotation about the center
    double deg = rng.uniform(-cfg.max_rotation_deg, cfg.max_rotation_deg);
    double rad = deg * 3.14159265358979323846 / 180.0;
    double cs = std::cos(rad), sn = std::sin(rad);
    double cy = (static_cast<double>(out.height) - 1) / 2.0;
    double cx = (static_cast<double>(out.width) - 1) / 2.0;
    ImageBuffer rot = out;
    for (std::size_t y = 0; y < out.height; ++y)
      for (std::size_t x = 0; x < out.width; ++x) {
        double dy = static_cast<double>(y) - cy, dx = static_cast<double>(x) - cx;
        double sy = cy + cs * dy - sn * dx;
        double sx = cx + sn * dy + cs * dx;
        for (std::size_t c = 0; c < out.channels; ++c)
          rot.at(y, x, c) = clamp_u8(sample_edge(out, sy, sx, c));
      }
    out = std::move(rot);
  }

  if (rng.uniform() < cfg.prob) {  // brightness
    double f = rng.uniform(cfg.factor_lo, cfg.factor_hi);
    for (std::uint8_t& p : out.pixels) p = clamp_u8(f * static_cast<double>(p));
  }

  if (rng.uniform() < cfg.prob) {  // contrast about mid-gray
    double f = rng.uniform(cfg.factor_lo, cfg.factor_hi);
    for (std::uint8_t& p : out.pixels)
      p = clamp_u8(127.5 + f * (static_cast<double>(p) - 127.5));
  }

  if (rng.uniform() < cfg.prob) {  // additive gaussian noise
    double sigma = cfg.noise_sigma * 255.0;
    for (std::uint8_t& p : out.pixels)
      p = clamp_u8(static_cast<double>(p) + sigma * rng.normal());
  }

  return out;
}

}  // namespace capgen
