#pragma once

// Independent reference implementations used only by tests. Nothing here
// calls into the vectorized code paths it is compared against.

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

#include "amkalign/matrix.hpp"
#include "amkalign/rng.hpp"

namespace oracle {

using amkalign::Matrix;

inline double sq_dist(const Matrix& a, std::size_t i, const Matrix& b, std::size_t j) {
  double s = 0.0;
  for (std::size_t k = 0; k < a.cols(); ++k) {
    const double d = a(i, k) - b(j, k);
    s += d * d;
  }
  return s;
}

inline double kernel(double d2, const std::vector<double>& sigmas, const std::vector<double>& logits) {
  double mx = logits[0];
  for (double l : logits) mx = std::max(mx, l);
  double z = 0.0;
  for (double l : logits) z += std::exp(l - mx);
  double k = 0.0;
  for (std::size_t m = 0; m < sigmas.size(); ++m) {
    k += std::exp(logits[m] - mx) / z * std::exp(-d2 / (2.0 * sigmas[m] * sigmas[m]));
  }
  return k;
}

/// Direct loops over every ordered pair.
inline double mmd2(const Matrix& x, const Matrix& y, const std::vector<double>& sigmas,
                   const std::vector<double>& logits) {
  const double ns = static_cast<double>(x.rows());
  const double nt = static_cast<double>(y.rows());
  double sxx = 0.0, syy = 0.0, sxy = 0.0;
  for (std::size_t i = 0; i < x.rows(); ++i) {
    for (std::size_t j = 0; j < x.rows(); ++j) {
      if (i != j) sxx += kernel(sq_dist(x, i, x, j), sigmas, logits);
    }
  }
  for (std::size_t i = 0; i < y.rows(); ++i) {
    for (std::size_t j = 0; j < y.rows(); ++j) {
      if (i != j) syy += kernel(sq_dist(y, i, y, j), sigmas, logits);
    }
  }
  for (std::size_t i = 0; i < x.rows(); ++i) {
    for (std::size_t j = 0; j < y.rows(); ++j) sxy += kernel(sq_dist(x, i, y, j), sigmas, logits);
  }
  return sxx / (ns * (ns - 1.0)) + syy / (nt * (nt - 1.0)) - 2.0 * sxy / (ns * nt);
}

/// Central finite difference of f with respect to each entry of v.
inline std::vector<double> numeric_gradient(std::vector<double>& v, const std::function<double()>& f,
                                            double h = 1e-5) {
  std::vector<double> g(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) {
    const double orig = v[i];
    v[i] = orig + h;
    const double fp = f();
    v[i] = orig - h;
    const double fm = f();
    v[i] = orig;
    g[i] = (fp - fm) / (2.0 * h);
  }
  return g;
}

/// |a − n| / max(|a|, |n|, floor). The floor keeps entries that are zero
/// up to round-off from dominating.
inline double rel_err(double analytic, double numeric, double floor = 1e-6) {
  const double denom = std::max({std::abs(analytic), std::abs(numeric), floor});
  return std::abs(analytic - numeric) / denom;
}

inline double max_rel_err(const std::vector<double>& a, const std::vector<double>& n,
                          double floor = 1e-6) {
  double worst = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) worst = std::max(worst, rel_err(a[i], n[i], floor));
  return worst;
}

}  // namespace oracle
