#pragma once

// Adaptive multi-scale kernel MMD: a softmax-weighted sum of Gaussian kernels
// over a centered geometric bandwidth ladder, estimated with the within-set
// diagonal removed and the cross term taken over all pairs.

#include <algorithm>
#include <cmath>
#include <span>
#include <string>
#include <vector>

#include "amkalign/matrix.hpp"

namespace amkalign {

/// Squared Euclidean distances; symmetric with an exactly zero diagonal.
struct DistanceMatrix {
  Matrix d2;
  std::size_t n() const noexcept { return d2.rows(); }
};

/// Numerically stable softmax.
inline std::vector<double> weights_from_logits(std::span<const double> logits) {
  if (logits.empty()) throw InvalidArgument("softmax needs at least one logit");
  double mx = logits[0];
  for (double l : logits) {
    if (!std::isfinite(l)) throw InvalidArgument("logits must be finite");
    mx = std::max(mx, l);
  }
  std::vector<double> w(logits.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    w[i] = std::exp(logits[i] - mx);
    sum += w[i];
  }
  for (double& v : w) v /= sum;
  return w;
}

/// Bandwidth ladder plus kernel-weight logits. Weights are softmax(logits).
struct KernelParams {
  std::vector<double> bandwidths;
  std::vector<double> logits;

  KernelParams() = default;
  KernelParams(std::vector<double> sigmas, std::vector<double> weight_logits)
      : bandwidths(std::move(sigmas)), logits(std::move(weight_logits)) {
    validate();
  }
  /// Uniform weights over the given bandwidths.
  explicit KernelParams(std::vector<double> sigmas)
      : KernelParams(sigmas, std::vector<double>(sigmas.size(), 0.0)) {}

  std::size_t count() const noexcept { return bandwidths.size(); }
  std::vector<double> weights() const { return weights_from_logits(logits); }

  void validate() const {
    if (bandwidths.empty()) throw InvalidArgument("kernel needs at least one bandwidth");
    if (logits.size() != bandwidths.size()) {
      throw InvalidArgument("kernel logits and bandwidths differ in length");
    }
    for (double s : bandwidths) {
      if (!std::isfinite(s) || s <= 0.0) throw InvalidArgument("bandwidths must be positive");
    }
    for (double l : logits) {
      if (!std::isfinite(l)) throw InvalidArgument("kernel logits must be finite");
    }
  }
};

/// ‖Z_i − Z_j‖² through ‖a‖² + ‖b‖² − 2a·b over the upper triangle, mirrored.
inline DistanceMatrix pairwise_sq_dists(const Matrix& z) {
  if (z.rows() == 0) throw InvalidArgument("pairwise distances need at least one row");
  if (!z.all_finite()) throw InvalidArgument("pairwise distances need finite input");
  const std::size_t n = z.rows();
  std::vector<double> norms(n);
  for (std::size_t i = 0; i < n; ++i) {
    auto zi = z.row(i);
    double s = 0.0;
    for (double v : zi) s += v * v;
    norms[i] = s;
  }
  DistanceMatrix d{Matrix(n, n)};
  for (std::size_t i = 0; i < n; ++i) {
    auto zi = z.row(i);
    for (std::size_t j = i + 1; j < n; ++j) {
      auto zj = z.row(j);
      double dot = 0.0;
      for (std::size_t k = 0; k < z.cols(); ++k) dot += zi[k] * zj[k];
      const double v = std::max(0.0, norms[i] + norms[j] - 2.0 * dot);
      d.d2(i, j) = v;
      d.d2(j, i) = v;
    }
  }
  return d;
}

/// sqrt(median(off-diagonal d²) / 2). If the median is zero but some pair is
/// apart, the median over the strictly positive entries is used instead.
inline double median_bandwidth(const DistanceMatrix& d) {
  const std::size_t n = d.n();
  if (n < 2) throw InsufficientSamples("median bandwidth needs at least two rows");
  std::vector<double> vals;
  vals.reserve(n * (n - 1) / 2);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) vals.push_back(d.d2(i, j));
  }
  auto median_of = [](std::vector<double> v) {
    std::sort(v.begin(), v.end());
    const std::size_t m = v.size();
    return m % 2 == 1 ? v[m / 2] : 0.5 * (v[m / 2 - 1] + v[m / 2]);
  };
  double med = median_of(vals);
  if (med <= 0.0) {
    std::vector<double> pos;
    for (double v : vals) {
      if (v > 0.0) pos.push_back(v);
    }
    if (pos.empty()) throw DegenerateInput("all pairwise distances are zero");
    med = median_of(std::move(pos));
  }
  return std::sqrt(med / 2.0);
}

/// σ_m = σ_base · γ^(m − ceil(M/2)), m = 1..M.
inline std::vector<double> bandwidth_ladder(double sigma_base, int count, double ratio) {
  if (!std::isfinite(sigma_base) || sigma_base <= 0.0) {
    throw InvalidArgument("base bandwidth must be positive");
  }
  if (count < 1) throw InvalidArgument("kernel count must be at least 1");
  if (!std::isfinite(ratio) || ratio <= 1.0) throw InvalidArgument("ladder ratio must exceed 1");
  const int center = (count + 1) / 2;
  std::vector<double> out(static_cast<std::size_t>(count));
  for (int m = 1; m <= count; ++m) {
    out[static_cast<std::size_t>(m - 1)] = sigma_base * std::pow(ratio, m - center);
  }
  return out;
}

/// Σ_m α_m exp(−d²/(2σ_m²)) given precomputed weights.
inline double fused_kernel(double d2, std::span<const double> sigmas, std::span<const double> alphas) {
  double k = 0.0;
  for (std::size_t m = 0; m < sigmas.size(); ++m) {
    k += alphas[m] * std::exp(-d2 / (2.0 * sigmas[m] * sigmas[m]));
  }
  return k;
}

inline double fused_kernel(double d2, const KernelParams& params) {
  if (!(d2 >= 0.0)) throw InvalidArgument("squared distance must be nonnegative");
  params.validate();
  const auto w = params.weights();
  return fused_kernel(d2, params.bandwidths, w);
}

/// Median-heuristic ladder on the pooled stack [X; Y].
inline KernelParams adaptive_kernel(const Matrix& x, const Matrix& y, int count, double ratio,
                                    std::vector<double> logits = {}) {
  if (logits.empty()) logits.assign(static_cast<std::size_t>(std::max(count, 0)), 0.0);
  const double base = median_bandwidth(pairwise_sq_dists(vstack(x, y)));
  return KernelParams(bandwidth_ladder(base, count, ratio), std::move(logits));
}

namespace detail {

inline void check_mmd_inputs(const Matrix& x, const Matrix& y) {
  if (x.rows() < 2 || y.rows() < 2) {
    throw InsufficientSamples("MMD needs at least two samples per set (got " +
                              std::to_string(x.rows()) + " and " + std::to_string(y.rows()) + ")");
  }
  if (x.cols() != y.cols()) throw ShapeError("MMD inputs differ in feature dimension");
}

/// Per-kernel block sums over the stacked distance matrix: within-X (i<j),
/// within-Y (i<j), and the full cross block.
struct BlockSums {
  std::vector<double> xx, yy, xy;
};

inline BlockSums block_sums(const DistanceMatrix& d, std::size_t ns, std::span<const double> sigmas) {
  const std::size_t m = sigmas.size();
  const std::size_t n = d.n();
  BlockSums s{std::vector<double>(m, 0.0), std::vector<double>(m, 0.0), std::vector<double>(m, 0.0)};
  std::vector<double> inv(m);
  for (std::size_t k = 0; k < m; ++k) inv[k] = -1.0 / (2.0 * sigmas[k] * sigmas[k]);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      const double v = d.d2(i, j);
      auto& acc = (j < ns) ? s.xx : (i >= ns ? s.yy : s.xy);
      for (std::size_t k = 0; k < m; ++k) acc[k] += std::exp(v * inv[k]);
    }
  }
  return s;
}

inline std::vector<double> per_kernel_mmd2(const BlockSums& s, std::size_t ns, std::size_t nt) {
  const double a = 2.0 / (static_cast<double>(ns) * static_cast<double>(ns - 1));
  const double b = 2.0 / (static_cast<double>(nt) * static_cast<double>(nt - 1));
  const double c = 2.0 / (static_cast<double>(ns) * static_cast<double>(nt));
  std::vector<double> out(s.xx.size());
  for (std::size_t k = 0; k < out.size(); ++k) out[k] = a * s.xx[k] + b * s.yy[k] - c * s.xy[k];
  return out;
}

}  // namespace detail

/// Single-kernel MMD² for every bandwidth in the ladder (unweighted).
inline std::vector<double> mmd2_per_kernel(const Matrix& x, const Matrix& y,
                                           std::span<const double> sigmas) {
  detail::check_mmd_inputs(x, y);
  const auto d = pairwise_sq_dists(vstack(x, y));
  return detail::per_kernel_mmd2(detail::block_sums(d, x.rows(), sigmas), x.rows(), y.rows());
}

/// AMK-MMD² with the within-set diagonal excluded and the cross term over all pairs.
inline double mmd2_unbiased(const Matrix& x, const Matrix& y, const KernelParams& params) {
  params.validate();
  const auto per = mmd2_per_kernel(x, y, params.bandwidths);
  const auto w = params.weights();
  double v = 0.0;
  for (std::size_t k = 0; k < per.size(); ++k) v += w[k] * per[k];
  return v;
}

struct MmdGradients {
  Matrix dx;
  Matrix dy;
  std::vector<double> dlogits;
};

struct MmdValueAndGrad {
  double value = 0.0;
  MmdGradients grads;
};

/// Value and exact gradients with respect to X, Y and the weight logits.
/// Bandwidths are held constant.
inline MmdValueAndGrad mmd2_grad(const Matrix& x, const Matrix& y, const KernelParams& params) {
  params.validate();
  detail::check_mmd_inputs(x, y);
  const std::size_t ns = x.rows();
  const std::size_t nt = y.rows();
  const std::size_t dim = x.cols();
  const std::size_t m = params.count();
  const auto w = params.weights();
  const Matrix z = vstack(x, y);
  const auto d = pairwise_sq_dists(z);

  const double a = 1.0 / (static_cast<double>(ns) * static_cast<double>(ns - 1));
  const double b = 1.0 / (static_cast<double>(nt) * static_cast<double>(nt - 1));
  const double c = 2.0 / (static_cast<double>(ns) * static_cast<double>(nt));

  std::vector<double> inv(m);
  for (std::size_t k = 0; k < m; ++k) {
    inv[k] = -1.0 / (2.0 * params.bandwidths[k] * params.bandwidths[k]);
  }

  detail::BlockSums sums{std::vector<double>(m, 0.0), std::vector<double>(m, 0.0),
                         std::vector<double>(m, 0.0)};
  Matrix dz(ns + nt, dim);
  for (std::size_t i = 0; i < ns + nt; ++i) {
    auto zi = z.row(i);
    for (std::size_t j = i + 1; j < ns + nt; ++j) {
      const double v = d.d2(i, j);
      double kprime = 0.0;  // dK/d(d²)
      auto& acc = (j < ns) ? sums.xx : (i >= ns ? sums.yy : sums.xy);
      for (std::size_t k = 0; k < m; ++k) {
        const double e = std::exp(v * inv[k]);
        acc[k] += e;
        kprime += w[k] * inv[k] * e;
      }
      // Weight of this unordered pair in the value, times d(d²)/dz_i = 2(z_i − z_j).
      double coef;
      if (j < ns) {
        coef = 2.0 * a;
      } else if (i >= ns) {
        coef = 2.0 * b;
      } else {
        coef = -c;
      }
      const double g = 2.0 * coef * kprime;
      auto zj = z.row(j);
      auto gi = dz.row(i);
      auto gj = dz.row(j);
      for (std::size_t t = 0; t < dim; ++t) {
        const double diff = g * (zi[t] - zj[t]);
        gi[t] += diff;
        gj[t] -= diff;
      }
    }
  }

  const auto per = detail::per_kernel_mmd2(sums, ns, nt);
  MmdValueAndGrad out;
  double avg = 0.0;
  for (std::size_t k = 0; k < m; ++k) {
    out.value += w[k] * per[k];
    avg += w[k] * per[k];
  }
  out.grads.dlogits.resize(m);
  for (std::size_t k = 0; k < m; ++k) out.grads.dlogits[k] = w[k] * (per[k] - avg);
  out.grads.dx = row_slice(dz, 0, ns);
  out.grads.dy = row_slice(dz, ns, nt);
  return out;
}

}  // namespace amkalign
