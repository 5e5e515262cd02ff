#pragma once

#include <algorithm>
#include <cmath>
#include <string>
#include <utility>
#include <vector>

#include "amkalign/feature_batch.hpp"
#include "amkalign/matrix.hpp"

namespace amkalign {

/// Global and part features for both modalities, row-aligned by pairing.
struct BranchSet {
  FeatureBatch g_rgb;
  FeatureBatch g_ir;
  FeatureBatch p_rgb;
  FeatureBatch p_ir;

  std::size_t size() const noexcept { return g_rgb.size(); }

  void validate() const {
    const std::size_t n = g_rgb.size();
    if (g_ir.size() != n || p_rgb.size() != n || p_ir.size() != n) {
      throw ShapeError("branch set: all four batches must share the row count");
    }
    if (g_rgb.dim() != g_ir.dim()) throw ShapeError("branch set: global widths differ");
    if (p_rgb.dim() != p_ir.dim()) throw ShapeError("branch set: part widths differ");
    if (g_rgb.labels != p_rgb.labels || g_ir.labels != p_ir.labels) {
      throw ShapeError("branch set: global and part labels differ within a modality");
    }
  }
};

/// y = x·W + b, with W in×out and b 1×out.
struct Affine {
  Matrix weight;
  Matrix bias;

  Affine() = default;
  Affine(std::size_t in, std::size_t out) : weight(in, out), bias(1, out) {}
  Affine(Matrix w, Matrix b) : weight(std::move(w)), bias(std::move(b)) { validate(); }

  std::size_t in_dim() const noexcept { return weight.rows(); }
  std::size_t out_dim() const noexcept { return weight.cols(); }

  void validate() const {
    if (bias.rows() != 1 || bias.cols() != weight.cols()) {
      throw ShapeError("affine bias must be 1x" + std::to_string(weight.cols()));
    }
  }

  Matrix apply(const Matrix& x) const {
    if (x.cols() != weight.rows()) {
      throw ShapeError("affine input width " + std::to_string(x.cols()) + " != " +
                       std::to_string(weight.rows()));
    }
    Matrix y = matmul(x, weight);
    for (std::size_t i = 0; i < y.rows(); ++i) {
      auto r = y.row(i);
      for (std::size_t j = 0; j < r.size(); ++j) r[j] += bias(0, j);
    }
    return y;
  }
};

inline Matrix relu(Matrix m) {
  for (double& v : m.data()) v = std::max(v, 0.0);
  return m;
}

/// F_intra^m = F_global^m ⊕ F_part^m for each modality.
inline std::pair<FeatureBatch, FeatureBatch> intra_fuse(const BranchSet& bs) {
  bs.validate();
  auto rgb = concat_rows_dimwise(bs.g_rgb, bs.p_rgb);
  auto ir = concat_rows_dimwise(bs.g_ir, bs.p_ir);
  rgb.modality = Modality::RGB;
  ir.modality = Modality::IR;
  return {std::move(rgb), std::move(ir)};
}

inline void require_pairing(const FeatureBatch& a, const FeatureBatch& b) {
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a.labels[i] != b.labels[i]) {
      throw PairingError("row " + std::to_string(i) + ": RGB label " +
                         std::to_string(a.labels[i]) + " vs IR label " +
                         std::to_string(b.labels[i]));
    }
  }
}

/// (F_g^RGB ⊕ F_p^IR, F_g^IR ⊕ F_p^RGB).
inline std::pair<FeatureBatch, FeatureBatch> cross_fuse(const BranchSet& bs) {
  bs.validate();
  require_pairing(bs.g_rgb, bs.g_ir);
  FeatureBatch ri(hstack(bs.g_rgb.features, bs.p_ir.features), bs.g_rgb.labels, Modality::RGB,
                  Branch::Fused);
  FeatureBatch ir(hstack(bs.g_ir.features, bs.p_rgb.features), bs.g_ir.labels, Modality::IR,
                  Branch::Fused);
  return {std::move(ri), std::move(ir)};
}

/// Four-way concatenation [g_rgb | g_ir | p_rgb | p_ir].
inline Matrix hierarchical_concat(const BranchSet& bs) {
  bs.validate();
  require_pairing(bs.g_rgb, bs.g_ir);
  return hstack(hstack(bs.g_rgb.features, bs.g_ir.features),
                hstack(bs.p_rgb.features, bs.p_ir.features));
}

/// ReLU(shared_head(four-way concatenation)).
inline FeatureBatch hierarchical_fuse(const BranchSet& bs, const Affine& shared_head) {
  const Matrix cat = hierarchical_concat(bs);
  if (shared_head.in_dim() != cat.cols()) {
    throw ShapeError("shared head expects width " + std::to_string(shared_head.in_dim()) +
                     ", fused width is " + std::to_string(cat.cols()));
  }
  return FeatureBatch(relu(shared_head.apply(cat)), bs.g_rgb.labels, Modality::RGB,
                      Branch::Fused);
}

inline constexpr double kGemFloor = 1e-6;

inline void check_gem(const Matrix& tokens, double p) {
  if (!std::isfinite(p) || p < 1.0) throw InvalidArgument("GeM exponent must be >= 1");
  if (tokens.rows() == 0) throw InvalidArgument("GeM needs at least one token");
}

/// out_j = (mean_i max(t_ij, 1e-6)^p)^(1/p).
inline std::vector<double> gem_pool(const Matrix& tokens, double p) {
  check_gem(tokens, p);
  const double inv_l = 1.0 / static_cast<double>(tokens.rows());
  std::vector<double> out(tokens.cols());
  for (std::size_t j = 0; j < tokens.cols(); ++j) {
    double acc = 0.0;
    for (std::size_t i = 0; i < tokens.rows(); ++i) {
      acc += std::pow(std::max(tokens(i, j), kGemFloor), p);
    }
    out[j] = std::pow(acc * inv_l, 1.0 / p);
  }
  return out;
}

struct GemGrad {
  Matrix dtokens;
  double dp = 0.0;
};

/// Backward pass of gem_pool. Tokens at or below the floor receive zero gradient.
inline GemGrad gem_pool_backward(const Matrix& tokens, double p, std::span<const double> dout) {
  check_gem(tokens, p);
  if (dout.size() != tokens.cols()) throw ShapeError("GeM upstream gradient width mismatch");
  const double inv_l = 1.0 / static_cast<double>(tokens.rows());
  GemGrad g{Matrix(tokens.rows(), tokens.cols()), 0.0};
  for (std::size_t j = 0; j < tokens.cols(); ++j) {
    if (dout[j] == 0.0) continue;
    double m = 0.0, dm_dp = 0.0;
    for (std::size_t i = 0; i < tokens.rows(); ++i) {
      const double c = std::max(tokens(i, j), kGemFloor);
      const double cp = std::pow(c, p);
      m += cp;
      dm_dp += cp * std::log(c);
    }
    m *= inv_l;
    dm_dp *= inv_l;
    const double out = std::pow(m, 1.0 / p);
    // d out / d c_i = m^(1/p − 1) c_i^(p−1) / L
    const double scale = out / m * inv_l;
    for (std::size_t i = 0; i < tokens.rows(); ++i) {
      if (tokens(i, j) > kGemFloor) {
        g.dtokens(i, j) = dout[j] * scale * std::pow(tokens(i, j), p - 1.0);
      }
    }
    g.dp += dout[j] * out * (dm_dp / (p * m) - std::log(m) / (p * p));
  }
  return g;
}

}  // namespace amkalign
