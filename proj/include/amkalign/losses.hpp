#pragma once

#include <algorithm>
#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include "amkalign/amk_mmd.hpp"
#include "amkalign/matrix.hpp"

namespace amkalign {

struct LossWeights {
  double w_intra = 0.4;  // IMDAL
  double w_inter = 0.6;  // IDAL
  double lambda_tri = 1.0;
  double margin = 0.3;

  void validate() const {
    for (double v : {w_intra, w_inter, lambda_tri, margin}) {
      if (!std::isfinite(v) || v < 0.0) {
        throw InvalidArgument("loss weights and margin must be finite and >= 0");
      }
    }
  }
};

struct LossValue {
  double value = 0.0;
  Matrix grad;
};

/// Mean cross-entropy of softmax(logits) against integer labels.
inline LossValue id_loss(const Matrix& logits, const std::vector<int>& labels) {
  const std::size_t n = logits.rows(), c = logits.cols();
  if (n == 0) throw InvalidArgument("id_loss needs at least one row");
  if (labels.size() != n) throw ShapeError("id_loss: label count != logit rows");
  LossValue out{0.0, Matrix(n, c)};
  const double inv_n = 1.0 / static_cast<double>(n);
  for (std::size_t i = 0; i < n; ++i) {
    if (labels[i] < 0 || static_cast<std::size_t>(labels[i]) >= c) {
      throw InvalidArgument("label " + std::to_string(labels[i]) + " outside [0," +
                            std::to_string(c) + ")");
    }
    auto row = logits.row(i);
    const double mx = *std::max_element(row.begin(), row.end());
    double z = 0.0;
    for (double v : row) z += std::exp(v - mx);
    const double log_z = std::log(z) + mx;
    out.value += (log_z - row[static_cast<std::size_t>(labels[i])]) * inv_n;
    auto g = out.grad.row(i);
    for (std::size_t j = 0; j < c; ++j) g[j] = std::exp(row[j] - log_z) * inv_n;
    g[static_cast<std::size_t>(labels[i])] -= inv_n;
  }
  return out;
}

/// Batch-hard triplet loss with Euclidean distances. Ties pick the lowest index.
inline LossValue triplet_loss_hard(const Matrix& emb, const std::vector<int>& labels,
                                   double margin) {
  const std::size_t n = emb.rows(), d = emb.cols();
  if (labels.size() != n) throw ShapeError("triplet: label count != embedding rows");
  if (!std::isfinite(margin) || margin < 0.0) throw InvalidArgument("margin must be >= 0");
  Matrix dist(n, n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      double s = 0.0;
      for (std::size_t t = 0; t < d; ++t) {
        const double diff = emb(i, t) - emb(j, t);
        s += diff * diff;
      }
      dist(i, j) = dist(j, i) = std::sqrt(s);
    }
  }
  LossValue out{0.0, Matrix(n, d)};
  const double inv_n = 1.0 / static_cast<double>(n);
  auto pull = [&](std::size_t a, std::size_t b, double sign) {
    const double dab = dist(a, b);
    if (dab == 0.0) return;
    for (std::size_t t = 0; t < d; ++t) {
      const double g = sign * inv_n * (emb(a, t) - emb(b, t)) / dab;
      out.grad(a, t) += g;
      out.grad(b, t) -= g;
    }
  };
  for (std::size_t a = 0; a < n; ++a) {
    std::optional<std::size_t> pos, neg;
    for (std::size_t j = 0; j < n; ++j) {
      if (j == a) continue;
      if (labels[j] == labels[a]) {
        if (!pos || dist(a, j) > dist(a, *pos)) pos = j;
      } else {
        if (!neg || dist(a, j) < dist(a, *neg)) neg = j;
      }
    }
    if (!pos || !neg) {
      throw SamplingError("anchor " + std::to_string(a) + " (label " + std::to_string(labels[a]) +
                          ") has no " + (pos ? "negative" : "positive") + " in the batch");
    }
    const double hinge = dist(a, *pos) - dist(a, *neg) + margin;
    if (hinge <= 0.0) continue;
    out.value += hinge * inv_n;
    pull(a, *pos, 1.0);
    pull(a, *neg, -1.0);
  }
  return out;
}

/// How alignment kernels are chosen: a ladder around the median heuristic of
/// each operand pair, or fixed bandwidths when given.
struct KernelSettings {
  int count = 5;
  double ratio = 2.0;
  std::vector<double> logits;      // empty: uniform
  std::vector<double> bandwidths;  // nonempty: used as-is

  KernelParams resolve(const Matrix& x, const Matrix& y) const {
    if (!bandwidths.empty()) {
      return KernelParams(bandwidths,
                          logits.empty() ? std::vector<double>(bandwidths.size(), 0.0) : logits);
    }
    return adaptive_kernel(x, y, count, ratio, logits);
  }
};

/// Per-sample outputs of one training batch. Rows are RGB/IR pairs.
struct BatchOutputs {
  std::vector<int> labels;
  Matrix logits;
  Matrix g_rgb, g_ir, p_rgb, p_ir;  // each branch's share of the intra embedding
  Matrix intra_rgb, intra_ir;
  Matrix cross_ri, cross_ir;  // empty when the part branch is off
};

struct AlignmentKernels {
  std::optional<KernelParams> imdal_rgb, imdal_ir, idal;
};

struct AlignmentLosses {
  double imdal = 0.0;
  double idal = 0.0;
  Matrix dg_rgb, dg_ir, dp_rgb, dp_ir;
  Matrix dintra_rgb, dintra_ir;
  std::vector<double> dlogits_imdal_rgb, dlogits_imdal_ir, dlogits_idal;
};

inline AlignmentKernels resolve_alignment_kernels(const BatchOutputs& out, const KernelSettings& ks,
                                                  bool imdal, bool idal) {
  AlignmentKernels k;
  if (imdal) {
    k.imdal_rgb = ks.resolve(out.g_rgb, out.p_rgb);
    k.imdal_ir = ks.resolve(out.g_ir, out.p_ir);
  }
  if (idal) k.idal = ks.resolve(out.intra_rgb, out.intra_ir);
  return k;
}

/// IMDAL = mmd²(g_rgb, p_rgb) + mmd²(g_ir, p_ir); IDAL = mmd²(intra_rgb, intra_ir).
/// Terms whose kernel is absent are skipped and reported as zero.
inline AlignmentLosses alignment_losses(const BatchOutputs& out, const AlignmentKernels& k) {
  AlignmentLosses r;
  if (k.imdal_rgb && k.imdal_ir) {
    auto a = mmd2_grad(out.g_rgb, out.p_rgb, *k.imdal_rgb);
    auto b = mmd2_grad(out.g_ir, out.p_ir, *k.imdal_ir);
    r.imdal = a.value + b.value;
    r.dg_rgb = std::move(a.grads.dx);
    r.dp_rgb = std::move(a.grads.dy);
    r.dg_ir = std::move(b.grads.dx);
    r.dp_ir = std::move(b.grads.dy);
    r.dlogits_imdal_rgb = std::move(a.grads.dlogits);
    r.dlogits_imdal_ir = std::move(b.grads.dlogits);
  }
  if (k.idal) {
    auto c = mmd2_grad(out.intra_rgb, out.intra_ir, *k.idal);
    r.idal = c.value;
    r.dintra_rgb = std::move(c.grads.dx);
    r.dintra_ir = std::move(c.grads.dy);
    r.dlogits_idal = std::move(c.grads.dlogits);
  }
  return r;
}

struct LossReport {
  double total = 0.0;
  double l_id = 0.0;
  double l_tri = 0.0;
  double l_imdal = 0.0;
  double l_idal = 0.0;
  // Gradients of total with respect to each BatchOutputs field.
  Matrix dlogits;
  Matrix dg_rgb, dg_ir, dp_rgb, dp_ir;
  Matrix dintra_rgb, dintra_ir;
  Matrix dcross_ri, dcross_ir;
  // Gradient of total with respect to the shared kernel logits.
  std::vector<double> dkernel_logits;
};

namespace detail {

inline void accumulate(Matrix& into, const Matrix& g, double scale) {
  if (g.empty() || scale == 0.0) return;
  require_same_shape(into, g, "gradient accumulation");
  for (std::size_t i = 0; i < g.size(); ++i) into.data()[i] += scale * g.data()[i];
}

}  // namespace detail

/// L = L_id + λ_tri·L_tri + w_intra·L_imdal + w_inter·L_idal.
/// The triplet term runs on [intra_rgb; intra_ir] plus both cross embeddings when present.
inline LossReport total_objective(const BatchOutputs& out, const LossWeights& w,
                                  const AlignmentKernels& kernels) {
  w.validate();
  const std::size_t n = out.labels.size();
  LossReport r;
  auto id = id_loss(out.logits, out.labels);
  r.l_id = id.value;
  r.dlogits = std::move(id.grad);

  r.dg_rgb = Matrix(out.g_rgb.rows(), out.g_rgb.cols());
  r.dg_ir = Matrix(out.g_ir.rows(), out.g_ir.cols());
  r.dp_rgb = Matrix(out.p_rgb.rows(), out.p_rgb.cols());
  r.dp_ir = Matrix(out.p_ir.rows(), out.p_ir.cols());
  r.dintra_rgb = Matrix(out.intra_rgb.rows(), out.intra_rgb.cols());
  r.dintra_ir = Matrix(out.intra_ir.rows(), out.intra_ir.cols());
  r.dcross_ri = Matrix(out.cross_ri.rows(), out.cross_ri.cols());
  r.dcross_ir = Matrix(out.cross_ir.rows(), out.cross_ir.cols());

  if (w.lambda_tri > 0.0) {
    const bool cross = !out.cross_ri.empty();
    Matrix stack = vstack(out.intra_rgb, out.intra_ir);
    if (cross) stack = vstack(stack, vstack(out.cross_ri, out.cross_ir));
    std::vector<int> labels;
    const int copies = cross ? 4 : 2;
    for (int c = 0; c < copies; ++c) labels.insert(labels.end(), out.labels.begin(), out.labels.end());
    auto tri = triplet_loss_hard(stack, labels, w.margin);
    r.l_tri = tri.value;
    detail::accumulate(r.dintra_rgb, row_slice(tri.grad, 0, n), w.lambda_tri);
    detail::accumulate(r.dintra_ir, row_slice(tri.grad, n, n), w.lambda_tri);
    if (cross) {
      detail::accumulate(r.dcross_ri, row_slice(tri.grad, 2 * n, n), w.lambda_tri);
      detail::accumulate(r.dcross_ir, row_slice(tri.grad, 3 * n, n), w.lambda_tri);
    }
  }

  AlignmentKernels active;
  if (w.w_intra > 0.0) {
    active.imdal_rgb = kernels.imdal_rgb;
    active.imdal_ir = kernels.imdal_ir;
  }
  if (w.w_inter > 0.0) active.idal = kernels.idal;
  auto al = alignment_losses(out, active);
  r.l_imdal = al.imdal;
  r.l_idal = al.idal;
  detail::accumulate(r.dg_rgb, al.dg_rgb, w.w_intra);
  detail::accumulate(r.dg_ir, al.dg_ir, w.w_intra);
  detail::accumulate(r.dp_rgb, al.dp_rgb, w.w_intra);
  detail::accumulate(r.dp_ir, al.dp_ir, w.w_intra);
  detail::accumulate(r.dintra_rgb, al.dintra_rgb, w.w_inter);
  detail::accumulate(r.dintra_ir, al.dintra_ir, w.w_inter);

  auto add_logits = [&](const std::vector<double>& g, double scale) {
    if (g.empty()) return;
    if (r.dkernel_logits.empty()) r.dkernel_logits.assign(g.size(), 0.0);
    for (std::size_t k = 0; k < g.size(); ++k) r.dkernel_logits[k] += scale * g[k];
  };
  add_logits(al.dlogits_imdal_rgb, w.w_intra);
  add_logits(al.dlogits_imdal_ir, w.w_intra);
  add_logits(al.dlogits_idal, w.w_inter);

  r.total = r.l_id + w.lambda_tri * r.l_tri + w.w_intra * r.l_imdal + w.w_inter * r.l_idal;
  return r;
}

}  // namespace amkalign
