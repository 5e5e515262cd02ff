#pragma once

// Phase-enhanced structural attention: a log-Gabor bank, the phase congruency
// map built from it, an edge-guided sigmoid attention map, and the softmax
// three-way fusion of visible, infrared and phase feature maps.

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <numbers>
#include <vector>

#include "amkalign/amk_mmd.hpp"
#include "amkalign/fft.hpp"
#include "amkalign/image.hpp"
#include "amkalign/matrix.hpp"

namespace amkalign {

struct LogGaborSettings {
  int scales = 4;
  int orientations = 6;
  double min_wavelength = 3.0;  // pixels
  double mult = 2.1;
  double sigma_onf = 0.55;
  /// Angular spread in radians; <= 0 selects half-max overlap of adjacent orientations.
  double sigma_theta = 0.0;
};

/// Half-max overlap between orientations π/O apart.
inline double half_max_angular_spread(int orientations) {
  const double spacing = std::numbers::pi / static_cast<double>(orientations);
  return (spacing / 2.0) / std::sqrt(2.0 * std::log(2.0));
}

/// Frequency-domain filters defined on the reflect-extended analysis grid
/// (2H × 2W), so periodic wrap-around introduces no artificial edges.
struct LogGaborBank {
  std::size_t height = 0;  // image rows
  std::size_t width = 0;   // image cols
  std::size_t grid_rows = 0;
  std::size_t grid_cols = 0;
  int scales = 0;
  int orientations = 0;
  double sigma_onf = 0.0;
  double sigma_theta = 0.0;
  std::vector<double> wavelengths;        // per scale, pixels
  std::vector<double> center_frequencies; // per scale, cycles/pixel
  std::vector<double> orientation_angles; // radians
  std::vector<Matrix> filters;            // index o * scales + s, real transfer values

  const Matrix& filter(int scale, int orientation) const {
    return filters[static_cast<std::size_t>(orientation * scales + scale)];
  }
};

/// Radial log-Gabor gain at frequency radius f for center frequency fs.
inline double log_gabor_radial(double f, double fs, double sigma_onf) {
  if (f <= 0.0) return 0.0;
  const double l = std::log(f / fs);
  const double s = std::log(sigma_onf);
  return std::exp(-(l * l) / (2.0 * s * s));
}

/// Gaussian angular gain for frequency angle theta around orientation theta0.
inline double log_gabor_angular(double theta, double theta0, double sigma_theta) {
  double d = std::remainder(theta - theta0, 2.0 * std::numbers::pi);
  return std::exp(-(d * d) / (2.0 * sigma_theta * sigma_theta));
}

inline LogGaborBank build_log_gabor_bank(std::size_t height, std::size_t width,
                                         const LogGaborSettings& s = {}) {
  if (height < 8 || width < 8) throw InvalidArgument("log-Gabor bank needs an image of at least 8x8");
  if (s.scales < 2) throw InvalidArgument("log-Gabor bank needs at least two scales");
  if (s.orientations < 1) throw InvalidArgument("log-Gabor bank needs at least one orientation");
  if (!(s.min_wavelength >= 2.0)) throw InvalidArgument("minimum wavelength must be >= 2 pixels");
  if (!(s.mult > 1.0)) throw InvalidArgument("scale multiplier must exceed 1");
  if (!(s.sigma_onf > 0.0 && s.sigma_onf < 1.0)) {
    throw InvalidArgument("sigma_onf must lie in (0, 1)");
  }

  LogGaborBank bank;
  bank.height = height;
  bank.width = width;
  bank.grid_rows = 2 * height;
  bank.grid_cols = 2 * width;
  bank.scales = s.scales;
  bank.orientations = s.orientations;
  bank.sigma_onf = s.sigma_onf;
  bank.sigma_theta = s.sigma_theta > 0.0 ? s.sigma_theta : half_max_angular_spread(s.orientations);
  for (int k = 0; k < s.scales; ++k) {
    const double wl = s.min_wavelength * std::pow(s.mult, k);
    bank.wavelengths.push_back(wl);
    bank.center_frequencies.push_back(1.0 / wl);
  }
  for (int o = 0; o < s.orientations; ++o) {
    bank.orientation_angles.push_back(static_cast<double>(o) * std::numbers::pi /
                                      static_cast<double>(s.orientations));
  }

  const std::size_t gr = bank.grid_rows, gc = bank.grid_cols;
  Matrix radius(gr, gc), angle(gr, gc);
  for (std::size_t r = 0; r < gr; ++r) {
    const double v = fft::bin_frequency(r, gr);
    for (std::size_t c = 0; c < gc; ++c) {
      const double u = fft::bin_frequency(c, gc);
      radius(r, c) = std::sqrt(u * u + v * v);
      angle(r, c) = std::atan2(v, u);
    }
  }

  bank.filters.reserve(static_cast<std::size_t>(s.scales * s.orientations));
  for (int o = 0; o < s.orientations; ++o) {
    for (int k = 0; k < s.scales; ++k) {
      Matrix f(gr, gc);
      for (std::size_t i = 0; i < f.size(); ++i) {
        f.data()[i] = log_gabor_radial(radius.data()[i], bank.center_frequencies[static_cast<std::size_t>(k)], s.sigma_onf) *
                      log_gabor_angular(angle.data()[i], bank.orientation_angles[static_cast<std::size_t>(o)], bank.sigma_theta);
      }
      f(0, 0) = 0.0;
      bank.filters.push_back(std::move(f));
    }
  }
  return bank;
}

struct PcParams {
  double noise_threshold = 0.0;  // T
  double epsilon = 1e-4;
  // Sigmoid weight on the spread of filter responses across scales.
  bool spread_weighting = true;
  double spread_cutoff = 0.5;
  double spread_gain = 10.0;

  void validate() const {
    if (!(noise_threshold >= 0.0) || !std::isfinite(noise_threshold)) {
      throw InvalidArgument("noise threshold must be finite and >= 0");
    }
    if (!(epsilon > 0.0) || !std::isfinite(epsilon)) throw InvalidArgument("epsilon must be > 0");
    if (!std::isfinite(spread_cutoff) || !std::isfinite(spread_gain) || spread_gain < 0.0) {
      throw InvalidArgument("spread weighting parameters must be finite, gain >= 0");
    }
  }

  double spread_weight(double sum_a, double max_a, int scales) const {
    if (!spread_weighting) return 1.0;
    if (!(max_a > 0.0)) return 0.0;
    const double spread = sum_a / (max_a * scales);
    return 1.0 / (1.0 + std::exp(spread_gain * (spread_cutoff - spread)));
  }
};

namespace detail {

/// Symmetric (half-sample) reflection to 2H × 2W.
inline fft::Grid reflect_extend(const Matrix& img) {
  const std::size_t h = img.rows(), w = img.cols();
  fft::Grid g(2 * h, 2 * w);
  for (std::size_t r = 0; r < 2 * h; ++r) {
    const std::size_t sr = r < h ? r : 2 * h - 1 - r;
    for (std::size_t c = 0; c < 2 * w; ++c) {
      const std::size_t sc = c < w ? c : 2 * w - 1 - c;
      g(r, c) = img(sr, sc);
    }
  }
  return g;
}

/// Complex filter responses (even = real, odd = imaginary) per scale for one orientation.
inline std::vector<fft::Grid> oriented_responses(const fft::Grid& spectrum, const LogGaborBank& bank,
                                                 int orientation) {
  std::vector<fft::Grid> out;
  out.reserve(static_cast<std::size_t>(bank.scales));
  for (int s = 0; s < bank.scales; ++s) {
    const Matrix& f = bank.filter(s, orientation);
    fft::Grid g = spectrum;
    for (std::size_t i = 0; i < g.data.size(); ++i) g.data[i] *= f.data()[i];
    fft::transform2d(g, true);
    out.push_back(std::move(g));
  }
  return out;
}

inline void check_bank(const GrayImage& img, const LogGaborBank& bank) {
  if (img.height() != bank.height || img.width() != bank.width) {
    throw ShapeError("image is " + std::to_string(img.height()) + "x" + std::to_string(img.width()) +
                     " but the filter bank was built for " + std::to_string(bank.height) + "x" +
                     std::to_string(bank.width));
  }
}

}  // namespace detail

/// Unclamped per-pixel phase congruency Σ_o Σ_s ⌊E_os − T⌋₊ / (Σ_o Σ_s A_os + ε).
/// E_os projects the scale-s response onto the unit mean-phase vector of its
/// orientation; energy and amplitude are pooled over orientations before the
/// division so that orientations with no signal cannot amplify ε.
inline Matrix phase_congruency_raw(const GrayImage& img, const LogGaborBank& bank,
                                   const PcParams& params) {
  params.validate();
  detail::check_bank(img, bank);
  fft::Grid spectrum = detail::reflect_extend(img.pixels());
  fft::transform2d(spectrum, false);

  const std::size_t h = bank.height, w = bank.width;
  Matrix energy(h, w), amplitude(h, w);
  for (int o = 0; o < bank.orientations; ++o) {
    const auto resp = detail::oriented_responses(spectrum, bank, o);
    for (std::size_t r = 0; r < h; ++r) {
      for (std::size_t c = 0; c < w; ++c) {
        double sum_e = 0.0, sum_o = 0.0, sum_a = 0.0, max_a = 0.0;
        for (const auto& g : resp) {
          const auto v = g(r, c);
          sum_e += v.real();
          sum_o += v.imag();
          sum_a += std::abs(v);
          max_a = std::max(max_a, std::abs(v));
        }
        const double norm = std::hypot(sum_e, sum_o);
        double num = 0.0;
        if (norm > 0.0) {
          const double ce = sum_e / norm, co = sum_o / norm;
          for (const auto& g : resp) {
            const auto v = g(r, c);
            num += std::max(v.real() * ce + v.imag() * co - params.noise_threshold, 0.0);
          }
        }
        energy(r, c) += num * params.spread_weight(sum_a, max_a, bank.scales);
        amplitude(r, c) += sum_a;
      }
    }
  }
  Matrix pc(h, w);
  for (std::size_t i = 0; i < pc.size(); ++i) {
    pc.data()[i] = energy.data()[i] / (amplitude.data()[i] + params.epsilon);
  }
  return pc;
}

inline GrayImage phase_congruency(const GrayImage& img, const LogGaborBank& bank,
                                  const PcParams& params = {}) {
  return GrayImage(phase_congruency_raw(img, bank, params));
}

/// Harness noise threshold: k times the median amplitude at the finest scale,
/// taken over all orientations.
inline double finest_scale_noise_threshold(const GrayImage& img, const LogGaborBank& bank,
                                           double k = 2.0) {
  detail::check_bank(img, bank);
  fft::Grid spectrum = detail::reflect_extend(img.pixels());
  fft::transform2d(spectrum, false);
  std::vector<double> amps;
  amps.reserve(bank.height * bank.width * static_cast<std::size_t>(bank.orientations));
  for (int o = 0; o < bank.orientations; ++o) {
    fft::Grid g = spectrum;
    const Matrix& f = bank.filter(0, o);
    for (std::size_t i = 0; i < g.data.size(); ++i) g.data[i] *= f.data()[i];
    fft::transform2d(g, true);
    for (std::size_t r = 0; r < bank.height; ++r) {
      for (std::size_t c = 0; c < bank.width; ++c) amps.push_back(std::abs(g(r, c)));
    }
  }
  std::sort(amps.begin(), amps.end());
  const std::size_t n = amps.size();
  const double med = n % 2 ? amps[n / 2] : 0.5 * (amps[n / 2 - 1] + amps[n / 2]);
  return k * med;
}

/// Convolution kernel (odd k × k, CNN-style cross-correlation) plus scalar bias.
struct AttentionParams {
  Matrix kernel{{1.0}};
  double bias = 0.0;

  void validate() const {
    if (kernel.rows() != kernel.cols() || kernel.rows() % 2 == 0) {
      throw InvalidArgument("attention kernel must be square with odd side");
    }
    if (!kernel.all_finite() || !std::isfinite(bias)) {
      throw InvalidArgument("attention parameters must be finite");
    }
  }
};

/// Reflect-101 index (… 2 1 | 0 1 2 … n-1 | n-2 …).
inline std::ptrdiff_t reflect101(std::ptrdiff_t i, std::ptrdiff_t n) {
  if (n == 1) return 0;
  while (i < 0 || i >= n) {
    if (i < 0) i = -i;
    if (i >= n) i = 2 * (n - 1) - i;
  }
  return i;
}

/// Same-size correlation with reflect-101 borders.
inline Matrix correlate_reflect101(const Matrix& src, const Matrix& kernel) {
  const auto h = static_cast<std::ptrdiff_t>(src.rows());
  const auto w = static_cast<std::ptrdiff_t>(src.cols());
  const auto half = static_cast<std::ptrdiff_t>(kernel.rows() / 2);
  Matrix out(src.rows(), src.cols());
  for (std::ptrdiff_t y = 0; y < h; ++y) {
    for (std::ptrdiff_t x = 0; x < w; ++x) {
      double acc = 0.0;
      for (std::ptrdiff_t dy = -half; dy <= half; ++dy) {
        const auto sy = static_cast<std::size_t>(reflect101(y + dy, h));
        for (std::ptrdiff_t dx = -half; dx <= half; ++dx) {
          const auto sx = static_cast<std::size_t>(reflect101(x + dx, w));
          acc += kernel(static_cast<std::size_t>(dy + half), static_cast<std::size_t>(dx + half)) *
                 src(sy, sx);
        }
      }
      out(static_cast<std::size_t>(y), static_cast<std::size_t>(x)) = acc;
    }
  }
  return out;
}

inline double sigmoid(double z) {
  return z >= 0.0 ? 1.0 / (1.0 + std::exp(-z)) : std::exp(z) / (1.0 + std::exp(z));
}

/// A = σ(W_e ∗ PC + b), kept strictly inside (0, 1).
inline GrayImage edge_attention(const GrayImage& pc, const AttentionParams& params) {
  params.validate();
  Matrix a = correlate_reflect101(pc.pixels(), params.kernel);
  constexpr double lo = std::numeric_limits<double>::min();
  const double hi = std::nextafter(1.0, 0.0);
  for (double& v : a.data()) v = std::clamp(sigmoid(v + params.bias), lo, hi);
  return GrayImage(std::move(a));
}

/// F′ = A ⊙ F.
inline Matrix apply_attention(const Matrix& features, const GrayImage& attention) {
  require_same_shape(features, attention.pixels(), "apply_attention");
  Matrix out = features;
  for (std::size_t i = 0; i < out.size(); ++i) out.data()[i] *= attention.pixels().data()[i];
  return out;
}

/// Logits for (visible, infrared, phase); weights are their softmax.
struct FusionLogits {
  std::array<double, 3> logits{0.0, 0.0, 0.0};
  std::array<double, 3> weights() const {
    const auto w = weights_from_logits(logits);
    return {w[0], w[1], w[2]};
  }
};

/// α_vis F′_vis + α_ir F′_ir + α_phase F_phase.
inline Matrix adaptive_fusion(const Matrix& vis, const Matrix& ir, const Matrix& phase,
                              const FusionLogits& logits) {
  require_same_shape(vis, ir, "adaptive_fusion");
  require_same_shape(vis, phase, "adaptive_fusion");
  const auto w = logits.weights();
  Matrix out(vis.rows(), vis.cols());
  for (std::size_t i = 0; i < out.size(); ++i) {
    out.data()[i] = w[0] * vis.data()[i] + w[1] * ir.data()[i] + w[2] * phase.data()[i];
  }
  return out;
}

}  // namespace amkalign
