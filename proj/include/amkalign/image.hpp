#pragma once

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "amkalign/matrix.hpp"

namespace amkalign {

/// Grayscale image, row-major with origin at the top-left. Pixels live in [0, 1].
class GrayImage {
 public:
  GrayImage() = default;
  GrayImage(std::size_t height, std::size_t width, double fill = 0.0)
      : pixels_(height, width, std::clamp(fill, 0.0, 1.0)) {}

  /// Takes ownership of m, clamping every value into [0, 1].
  explicit GrayImage(Matrix m) : pixels_(std::move(m)) {
    for (double& v : pixels_.data()) {
      if (!std::isfinite(v)) throw InvalidArgument("image pixels must be finite");
      v = std::clamp(v, 0.0, 1.0);
    }
  }

  std::size_t height() const noexcept { return pixels_.rows(); }
  std::size_t width() const noexcept { return pixels_.cols(); }
  double operator()(std::size_t y, std::size_t x) const noexcept { return pixels_(y, x); }
  void set(std::size_t y, std::size_t x, double v) noexcept {
    pixels_(y, x) = std::clamp(v, 0.0, 1.0);
  }
  const Matrix& pixels() const noexcept { return pixels_; }

  friend bool operator==(const GrayImage&, const GrayImage&) = default;

 private:
  Matrix pixels_;
};

/// Row count kept by crop_upper_body for a given height: max(1, floor(ratio * H)).
inline std::size_t upper_body_rows(std::size_t height, double ratio) {
  if (!std::isfinite(ratio) || ratio <= 0.0 || ratio > 1.0) {
    throw InvalidArgument("upper-body ratio must lie in (0, 1], got " + std::to_string(ratio));
  }
  return std::max<std::size_t>(
      1, static_cast<std::size_t>(std::floor(ratio * static_cast<double>(height))));
}

/// Top rows of the image at full width ("upper body" = smallest row indices).
inline GrayImage crop_upper_body(const GrayImage& img, double ratio) {
  const std::size_t rows = upper_body_rows(img.height(), ratio);
  if (img.height() == 0) throw InvalidArgument("cannot crop an empty image");
  return GrayImage(row_slice(img.pixels(), 0, rows));
}

// PGM (P5, maxval 255). Writes round half-up; reads map v -> v/255.

inline std::string encode_pgm(const GrayImage& img) {
  std::string out = "P5\n" + std::to_string(img.width()) + " " + std::to_string(img.height()) +
                    "\n255\n";
  out.reserve(out.size() + img.height() * img.width());
  for (std::size_t y = 0; y < img.height(); ++y) {
    for (std::size_t x = 0; x < img.width(); ++x) {
      const double scaled = std::floor(img(y, x) * 255.0 + 0.5);
      out.push_back(static_cast<char>(static_cast<std::uint8_t>(std::clamp(scaled, 0.0, 255.0))));
    }
  }
  return out;
}

inline GrayImage decode_pgm(const std::string& bytes) {
  std::size_t pos = 0;
  auto skip_space_and_comments = [&] {
    while (pos < bytes.size()) {
      if (bytes[pos] == '#') {
        while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
      } else if (std::isspace(static_cast<unsigned char>(bytes[pos]))) {
        ++pos;
      } else {
        break;
      }
    }
  };
  auto read_int = [&](const char* field) {
    skip_space_and_comments();
    std::size_t start = pos;
    while (pos < bytes.size() && std::isdigit(static_cast<unsigned char>(bytes[pos]))) ++pos;
    if (start == pos) throw ParseError(std::string("PGM: missing ") + field);
    return std::stoul(bytes.substr(start, pos - start));
  };

  if (bytes.size() < 2 || bytes[0] != 'P' || bytes[1] != '5') {
    throw ParseError("PGM: expected binary P5 magic");
  }
  pos = 2;
  const auto width = read_int("width");
  const auto height = read_int("height");
  const auto maxval = read_int("maxval");
  if (maxval != 255) throw ParseError("PGM: only maxval 255 is supported");
  if (width == 0 || height == 0) throw ParseError("PGM: empty image");
  if (pos >= bytes.size() || !std::isspace(static_cast<unsigned char>(bytes[pos]))) {
    throw ParseError("PGM: header must end with a single whitespace byte");
  }
  ++pos;
  if (bytes.size() - pos < width * height) throw ParseError("PGM: truncated pixel data");

  Matrix m(height, width);
  for (std::size_t i = 0; i < width * height; ++i) {
    m.data()[i] = static_cast<double>(static_cast<std::uint8_t>(bytes[pos + i])) / 255.0;
  }
  return GrayImage(std::move(m));
}

inline GrayImage read_pgm(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError("cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return decode_pgm(ss.str());
}

}  // namespace amkalign
