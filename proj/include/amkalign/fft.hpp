#pragma once

#include <cmath>
#include <complex>
#include <numbers>
#include <vector>

#include "amkalign/error.hpp"

namespace amkalign::fft {

using cplx = std::complex<double>;

inline bool is_pow2(std::size_t n) { return n != 0 && (n & (n - 1)) == 0; }

inline std::size_t next_pow2(std::size_t n) {
  std::size_t p = 1;
  while (p < n) p <<= 1;
  return p;
}

/// In-place iterative radix-2 transform. sign = -1 forward, +1 inverse (unscaled).
inline void radix2(std::vector<cplx>& a, int sign) {
  const std::size_t n = a.size();
  for (std::size_t i = 1, j = 0; i < n; ++i) {
    std::size_t bit = n >> 1;
    for (; j & bit; bit >>= 1) j ^= bit;
    j ^= bit;
    if (i < j) std::swap(a[i], a[j]);
  }
  for (std::size_t len = 2; len <= n; len <<= 1) {
    const double ang = sign * 2.0 * std::numbers::pi / static_cast<double>(len);
    const std::size_t half = len / 2;
    std::vector<cplx> tw(half);
    for (std::size_t k = 0; k < half; ++k) {
      tw[k] = cplx(std::cos(ang * static_cast<double>(k)), std::sin(ang * static_cast<double>(k)));
    }
    for (std::size_t i = 0; i < n; i += len) {
      for (std::size_t k = 0; k < half; ++k) {
        const cplx u = a[i + k];
        const cplx v = a[i + k + half] * tw[k];
        a[i + k] = u + v;
        a[i + k + half] = u - v;
      }
    }
  }
}

/// Bluestein chirp-z transform for arbitrary lengths (unscaled).
inline void bluestein(std::vector<cplx>& a, int sign) {
  const std::size_t n = a.size();
  const std::size_t m = next_pow2(2 * n - 1);
  std::vector<cplx> chirp(n);
  for (std::size_t k = 0; k < n; ++k) {
    // k² mod 2n keeps the angle argument small and exact.
    const std::size_t k2 = (k * k) % (2 * n);
    const double ang = sign * std::numbers::pi * static_cast<double>(k2) / static_cast<double>(n);
    chirp[k] = cplx(std::cos(ang), std::sin(ang));
  }
  std::vector<cplx> x(m), y(m);
  for (std::size_t k = 0; k < n; ++k) x[k] = a[k] * chirp[k];
  y[0] = std::conj(chirp[0]);
  for (std::size_t k = 1; k < n; ++k) {
    y[k] = std::conj(chirp[k]);
    y[m - k] = std::conj(chirp[k]);
  }
  radix2(x, -1);
  radix2(y, -1);
  for (std::size_t i = 0; i < m; ++i) x[i] *= y[i];
  radix2(x, +1);
  const double inv_m = 1.0 / static_cast<double>(m);
  for (std::size_t k = 0; k < n; ++k) a[k] = x[k] * inv_m * chirp[k];
}

/// 1-D DFT of any length. Inverse is scaled by 1/n.
inline void transform(std::vector<cplx>& a, bool inverse) {
  if (a.empty()) return;
  const int sign = inverse ? +1 : -1;
  if (is_pow2(a.size())) {
    radix2(a, sign);
  } else {
    bluestein(a, sign);
  }
  if (inverse) {
    const double s = 1.0 / static_cast<double>(a.size());
    for (auto& v : a) v *= s;
  }
}

/// Row-major 2-D grid of complex values.
struct Grid {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<cplx> data;

  Grid() = default;
  Grid(std::size_t r, std::size_t c) : rows(r), cols(c), data(r * c) {}
  cplx& operator()(std::size_t r, std::size_t c) { return data[r * cols + c]; }
  const cplx& operator()(std::size_t r, std::size_t c) const { return data[r * cols + c]; }
};

/// Separable 2-D DFT, rows then columns.
inline void transform2d(Grid& g, bool inverse) {
  std::vector<cplx> line(g.cols);
  for (std::size_t r = 0; r < g.rows; ++r) {
    std::copy(g.data.begin() + static_cast<long>(r * g.cols),
              g.data.begin() + static_cast<long>((r + 1) * g.cols), line.begin());
    transform(line, inverse);
    std::copy(line.begin(), line.end(), g.data.begin() + static_cast<long>(r * g.cols));
  }
  line.resize(g.rows);
  for (std::size_t c = 0; c < g.cols; ++c) {
    for (std::size_t r = 0; r < g.rows; ++r) line[r] = g(r, c);
    transform(line, inverse);
    for (std::size_t r = 0; r < g.rows; ++r) g(r, c) = line[r];
  }
}

/// Signed frequency in cycles per sample of bin k on an n-point grid.
inline double bin_frequency(std::size_t k, std::size_t n) {
  const auto kk = static_cast<double>(k);
  const auto nn = static_cast<double>(n);
  return (2 * k < n) ? kk / nn : (kk - nn) / nn;
}

}  // namespace amkalign::fft
