#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "amkalign/iffs.hpp"
#include "amkalign/losses.hpp"
#include "amkalign/rng.hpp"

namespace amkalign {

struct EncoderSizes {
  std::size_t d_in = 24;
  std::size_t hidden = 32;
  std::size_t d_f = 16;
  std::size_t d_e = 16;
  std::size_t classes = 16;
  double gem_p = 3.0;

  void validate() const {
    if (d_in == 0 || hidden == 0 || d_f == 0 || d_e == 0 || classes == 0) {
      throw InvalidArgument("encoder sizes must all be >= 1");
    }
    if (!std::isfinite(gem_p) || gem_p < 1.0) throw InvalidArgument("GeM p must be >= 1");
  }
};

/// Per-token two-layer network followed by GeM pooling. Shared by both modalities.
struct BranchNet {
  Affine l1;
  Affine l2;
  double gem_p = 3.0;
};

struct EncoderParams {
  BranchNet global;
  BranchNet part;
  Affine intra_head;  // 2·d_f → d_e
  Affine cross_head;  // 2·d_f → d_e
  Affine hier_head;   // 4·d_f → d_e, followed by ReLU
  Affine classifier;  // d_e → classes
  std::uint64_t revision = 0;

  EncoderSizes sizes() const {
    return {global.l1.in_dim(), global.l1.out_dim(), global.l2.out_dim(),
            intra_head.out_dim(), classifier.out_dim(), global.gem_p};
  }
};

/// Calls f(name, values, is_gem_exponent) for every trainable tensor in a fixed order.
template <typename P, typename F>
void for_each_tensor(P& params, F&& f) {
  auto affine = [&](const std::string& name, auto& a) {
    f(name + ".weight", std::span(a.weight.data()), false);
    f(name + ".bias", std::span(a.bias.data()), false);
  };
  auto branch = [&](const std::string& name, auto& b) {
    affine(name + ".l1", b.l1);
    affine(name + ".l2", b.l2);
    f(name + ".gem_p", std::span(&b.gem_p, 1), true);
  };
  branch("global", params.global);
  branch("part", params.part);
  affine("intra_head", params.intra_head);
  affine("cross_head", params.cross_head);
  affine("hier_head", params.hier_head);
  affine("classifier", params.classifier);
}

/// Same-shaped zero tensors, used for gradients and momentum buffers.
inline EncoderParams zeros_like(const EncoderParams& p) {
  EncoderParams z = p;
  for_each_tensor(z, [](const std::string&, std::span<double> v, bool) {
    std::fill(v.begin(), v.end(), 0.0);
  });
  z.revision = 0;
  return z;
}

inline EncoderParams init_encoder(const EncoderSizes& s, Rng& rng) {
  s.validate();
  auto layer = [&](std::size_t in, std::size_t out) {
    Affine a(in, out);
    a.weight = random_normal_matrix(rng, in, out, std::sqrt(2.0 / static_cast<double>(in)));
    return a;
  };
  EncoderParams p;
  for (BranchNet* b : {&p.global, &p.part}) {
    b->l1 = layer(s.d_in, s.hidden);
    b->l2 = layer(s.hidden, s.d_f);
    b->gem_p = s.gem_p;
  }
  p.intra_head = layer(2 * s.d_f, s.d_e);
  p.cross_head = layer(2 * s.d_f, s.d_e);
  p.hier_head = layer(4 * s.d_f, s.d_e);
  p.classifier = layer(s.d_e, s.classes);
  return p;
}

/// Token matrices stacked sample by sample: rows [i·L, (i+1)·L) belong to sample i.
struct TokenBatch {
  Matrix tokens;
  std::size_t per_sample = 1;

  std::size_t samples() const { return per_sample == 0 ? 0 : tokens.rows() / per_sample; }

  void validate() const {
    if (per_sample == 0 || tokens.rows() % per_sample != 0 || tokens.rows() == 0) {
      throw ShapeError("token batch rows must be a positive multiple of tokens per sample");
    }
  }
};

/// The first `count` tokens of every sample.
inline TokenBatch leading_tokens(const TokenBatch& b, std::size_t count) {
  b.validate();
  if (count == 0 || count > b.per_sample) {
    throw InvalidArgument("part token count must be in [1, " + std::to_string(b.per_sample) + "]");
  }
  const std::size_t n = b.samples();
  Matrix out(n * count, b.tokens.cols());
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t t = 0; t < count; ++t) {
      auto src = b.tokens.row(i * b.per_sample + t);
      std::copy(src.begin(), src.end(), out.row(i * count + t).begin());
    }
  }
  return {std::move(out), count};
}

/// Paired RGB/IR samples: row i of each modality shares labels[i].
struct PairBatch {
  TokenBatch rgb;
  TokenBatch ir;
  std::vector<int> labels;
  std::size_t part_tokens = 1;
  bool use_part = true;

  void validate() const {
    rgb.validate();
    ir.validate();
    if (rgb.samples() != labels.size() || ir.samples() != labels.size()) {
      throw ShapeError("pair batch: sample counts differ from label count");
    }
    if (rgb.per_sample != ir.per_sample) throw ShapeError("pair batch: token counts differ");
  }
};

struct BranchCache {
  Matrix x, z1, h1, z2, h2;
  Matrix feat;
  std::size_t per_sample = 1;
};

struct ForwardCache {
  std::uint64_t revision = 0;
  bool use_part = true;
  BranchCache g_rgb, g_ir, p_rgb, p_ir;
  Matrix intra_in_rgb, intra_in_ir, cross_in_ri, cross_in_ir, hier_in, hier_z, hier_h;
};

struct ForwardResult {
  BatchOutputs out;
  ForwardCache cache;
};

namespace detail {

inline Matrix relu_mask_apply(const Matrix& z, Matrix g) {
  for (std::size_t i = 0; i < g.size(); ++i) {
    if (!(z.data()[i] > 0.0)) g.data()[i] = 0.0;
  }
  return g;
}

inline BranchCache branch_forward(const BranchNet& net, const TokenBatch& tb) {
  tb.validate();
  BranchCache c;
  c.per_sample = tb.per_sample;
  c.x = tb.tokens;
  c.z1 = net.l1.apply(c.x);
  c.h1 = relu(c.z1);
  c.z2 = net.l2.apply(c.h1);
  c.h2 = relu(c.z2);
  const std::size_t n = tb.samples();
  c.feat = Matrix(n, net.l2.out_dim());
  for (std::size_t i = 0; i < n; ++i) {
    const auto pooled = gem_pool(row_slice(c.h2, i * c.per_sample, c.per_sample), net.gem_p);
    std::copy(pooled.begin(), pooled.end(), c.feat.row(i).begin());
  }
  return c;
}

inline void affine_backward(const Affine& a, const Matrix& x, const Matrix& dy, Affine& grad,
                            Matrix* dx) {
  add_inplace(grad.weight, matmul_tn(x, dy));
  for (std::size_t i = 0; i < dy.rows(); ++i) {
    for (std::size_t j = 0; j < dy.cols(); ++j) grad.bias(0, j) += dy(i, j);
  }
  if (dx) *dx = matmul_nt(dy, a.weight);
}

/// x · W[rows begin, begin + x.cols()): one branch's share of the intra head, without bias.
inline Matrix head_block(const Affine& head, const Matrix& x, std::size_t begin) {
  return matmul(x, row_slice(head.weight, begin, x.cols()));
}

/// Reverse of head_block: accumulates into the weight block and into dx.
inline void head_block_backward(const Affine& head, const Matrix& x, std::size_t begin,
                                const Matrix& dy, Affine& grad, Matrix& dx) {
  const Matrix dw = matmul_tn(x, dy);
  for (std::size_t i = 0; i < dw.rows(); ++i) {
    for (std::size_t j = 0; j < dw.cols(); ++j) grad.weight(begin + i, j) += dw(i, j);
  }
  add_inplace(dx, matmul_nt(dy, row_slice(head.weight, begin, x.cols())));
}

inline void branch_backward(const BranchNet& net, const BranchCache& c, const Matrix& dfeat,
                            BranchNet& grad) {
  const std::size_t n = c.feat.rows(), l = c.per_sample;
  Matrix dh2(c.h2.rows(), c.h2.cols());
  for (std::size_t i = 0; i < n; ++i) {
    const auto g = gem_pool_backward(row_slice(c.h2, i * l, l), net.gem_p, dfeat.row(i));
    grad.gem_p += g.dp;
    for (std::size_t t = 0; t < l; ++t) {
      auto src = g.dtokens.row(t);
      std::copy(src.begin(), src.end(), dh2.row(i * l + t).begin());
    }
  }
  const Matrix dz2 = relu_mask_apply(c.z2, std::move(dh2));
  Matrix dh1;
  affine_backward(net.l2, c.h1, dz2, grad.l2, &dh1);
  const Matrix dz1 = relu_mask_apply(c.z1, std::move(dh1));
  affine_backward(net.l1, c.x, dz1, grad.l1, nullptr);
}

}  // namespace detail

inline ForwardResult forward(const EncoderParams& params, const PairBatch& batch) {
  batch.validate();
  if (batch.rgb.tokens.cols() != params.global.l1.in_dim()) {
    throw ShapeError("token width " + std::to_string(batch.rgb.tokens.cols()) +
                     " != encoder input width " + std::to_string(params.global.l1.in_dim()));
  }
  ForwardResult r;
  auto& c = r.cache;
  auto& o = r.out;
  c.revision = params.revision;
  c.use_part = batch.use_part;
  o.labels = batch.labels;
  c.g_rgb = detail::branch_forward(params.global, batch.rgb);
  c.g_ir = detail::branch_forward(params.global, batch.ir);
  const Matrix& g_rgb = c.g_rgb.feat;
  const Matrix& g_ir = c.g_ir.feat;
  const std::size_t n = batch.labels.size(), df = params.part.l2.out_dim();
  Matrix p_rgb(n, df), p_ir(n, df);
  if (batch.use_part) {
    c.p_rgb = detail::branch_forward(params.part, leading_tokens(batch.rgb, batch.part_tokens));
    c.p_ir = detail::branch_forward(params.part, leading_tokens(batch.ir, batch.part_tokens));
    p_rgb = c.p_rgb.feat;
    p_ir = c.p_ir.feat;
  }
  c.intra_in_rgb = hstack(g_rgb, p_rgb);
  c.intra_in_ir = hstack(g_ir, p_ir);
  o.intra_rgb = params.intra_head.apply(c.intra_in_rgb);
  o.intra_ir = params.intra_head.apply(c.intra_in_ir);
  o.g_rgb = detail::head_block(params.intra_head, g_rgb, 0);
  o.g_ir = detail::head_block(params.intra_head, g_ir, 0);
  o.p_rgb = detail::head_block(params.intra_head, p_rgb, df);
  o.p_ir = detail::head_block(params.intra_head, p_ir, df);
  if (batch.use_part) {
    c.cross_in_ri = hstack(g_rgb, p_ir);
    c.cross_in_ir = hstack(g_ir, p_rgb);
    o.cross_ri = params.cross_head.apply(c.cross_in_ri);
    o.cross_ir = params.cross_head.apply(c.cross_in_ir);
  }
  c.hier_in = hstack(hstack(g_rgb, g_ir), hstack(p_rgb, p_ir));
  c.hier_z = params.hier_head.apply(c.hier_in);
  c.hier_h = relu(c.hier_z);
  o.logits = params.classifier.apply(c.hier_h);
  return r;
}

/// Reverse pass from the loss gradients carried in a LossReport.
inline EncoderParams backward(const EncoderParams& params, const ForwardCache& c,
                              const LossReport& g) {
  if (c.revision != params.revision) {
    throw ContractViolation("forward cache revision " + std::to_string(c.revision) +
                            " does not match parameter revision " +
                            std::to_string(params.revision));
  }
  if (g.dlogits.rows() != c.hier_h.rows()) {
    throw ContractViolation("loss gradients do not match the cached batch");
  }
  EncoderParams grad = zeros_like(params);
  const std::size_t df = params.global.l2.out_dim();

  const std::size_t n = c.hier_in.rows();
  Matrix dg_rgb(n, df), dg_ir(n, df), dp_rgb(n, df), dp_ir(n, df);
  detail::head_block_backward(params.intra_head, col_slice(c.intra_in_rgb, 0, df), 0, g.dg_rgb,
                              grad.intra_head, dg_rgb);
  detail::head_block_backward(params.intra_head, col_slice(c.intra_in_ir, 0, df), 0, g.dg_ir,
                              grad.intra_head, dg_ir);
  detail::head_block_backward(params.intra_head, col_slice(c.intra_in_rgb, df, df), df, g.dp_rgb,
                              grad.intra_head, dp_rgb);
  detail::head_block_backward(params.intra_head, col_slice(c.intra_in_ir, df, df), df, g.dp_ir,
                              grad.intra_head, dp_ir);
  auto add_cols = [](Matrix& into, const Matrix& src, std::size_t begin) {
    add_inplace(into, col_slice(src, begin, into.cols()));
  };

  Matrix dh;
  detail::affine_backward(params.classifier, c.hier_h, g.dlogits, grad.classifier, &dh);
  const Matrix dz = detail::relu_mask_apply(c.hier_z, std::move(dh));
  Matrix dcat;
  detail::affine_backward(params.hier_head, c.hier_in, dz, grad.hier_head, &dcat);
  add_cols(dg_rgb, dcat, 0);
  add_cols(dg_ir, dcat, df);
  add_cols(dp_rgb, dcat, 2 * df);
  add_cols(dp_ir, dcat, 3 * df);

  Matrix dx;
  detail::affine_backward(params.intra_head, c.intra_in_rgb, g.dintra_rgb, grad.intra_head, &dx);
  add_cols(dg_rgb, dx, 0);
  add_cols(dp_rgb, dx, df);
  detail::affine_backward(params.intra_head, c.intra_in_ir, g.dintra_ir, grad.intra_head, &dx);
  add_cols(dg_ir, dx, 0);
  add_cols(dp_ir, dx, df);

  if (c.use_part) {
    if (!g.dcross_ri.empty()) {
      detail::affine_backward(params.cross_head, c.cross_in_ri, g.dcross_ri, grad.cross_head, &dx);
      add_cols(dg_rgb, dx, 0);
      add_cols(dp_ir, dx, df);
      detail::affine_backward(params.cross_head, c.cross_in_ir, g.dcross_ir, grad.cross_head, &dx);
      add_cols(dg_ir, dx, 0);
      add_cols(dp_rgb, dx, df);
    }
    detail::branch_backward(params.part, c.p_rgb, dp_rgb, grad.part);
    detail::branch_backward(params.part, c.p_ir, dp_ir, grad.part);
  }
  detail::branch_backward(params.global, c.g_rgb, dg_rgb, grad.global);
  detail::branch_backward(params.global, c.g_ir, dg_ir, grad.global);
  return grad;
}

/// Intra-head embeddings for one modality, without pairing.
inline Matrix embed(const EncoderParams& params, const TokenBatch& tokens, std::size_t part_tokens,
                    bool use_part) {
  const auto g = detail::branch_forward(params.global, tokens);
  Matrix p(g.feat.rows(), params.part.l2.out_dim());
  if (use_part) p = detail::branch_forward(params.part, leading_tokens(tokens, part_tokens)).feat;
  return params.intra_head.apply(hstack(g.feat, p));
}

struct OptimizerState {
  EncoderParams velocity;
  double momentum = 0.9;
  double weight_decay = 5e-4;
  std::size_t epoch = 0;
};

inline OptimizerState make_optimizer(const EncoderParams& p, double momentum = 0.9,
                                     double weight_decay = 5e-4) {
  return {zeros_like(p), momentum, weight_decay, 0};
}

/// v ← μ·v + g + λ·w; w ← w − lr·v. GeM exponents skip weight decay and stay >= 1.
inline void sgd_step(EncoderParams& params, const EncoderParams& grads, OptimizerState& state,
                     double lr) {
  std::vector<std::span<const double>> gs;
  std::vector<std::span<double>> vs;
  for_each_tensor(grads, [&](const std::string&, std::span<const double> v, bool) {
    gs.push_back(v);
  });
  for_each_tensor(state.velocity, [&](const std::string&, std::span<double> v, bool) {
    vs.push_back(v);
  });
  std::size_t k = 0;
  for_each_tensor(params, [&](const std::string& name, std::span<double> w, bool is_p) {
    if (gs[k].size() != w.size() || vs[k].size() != w.size()) {
      throw ShapeError("sgd_step: shape mismatch at " + name);
    }
    const double wd = is_p ? 0.0 : state.weight_decay;
    for (std::size_t i = 0; i < w.size(); ++i) {
      vs[k][i] = state.momentum * vs[k][i] + gs[k][i] + wd * w[i];
      w[i] -= lr * vs[k][i];
      if (is_p) w[i] = std::max(w[i], 1.0);
    }
    ++k;
  });
  ++params.revision;
}

struct LrSchedule {
  double start = 0.01;
  double peak = 0.1;
  double mid = 0.01;
  double final = 0.001;
  double warmup_end = 0.125;
  double hold_end = 0.5;
  double mid_end = 0.75;

  void validate() const {
    if (!(0.0 <= warmup_end && warmup_end <= hold_end && hold_end <= mid_end && mid_end <= 1.0)) {
      throw InvalidArgument("schedule breakpoints must satisfy 0 <= warmup <= hold <= mid <= 1");
    }
    for (double v : {start, peak, mid, final}) {
      if (!std::isfinite(v) || v < 0.0) throw InvalidArgument("learning rates must be >= 0");
    }
  }
};

/// Linear warmup start→peak, then peak, mid and final plateaus.
inline double staged_lr(std::size_t epoch, std::size_t total_epochs, const LrSchedule& s = {}) {
  s.validate();
  if (epoch >= total_epochs) {
    throw InvalidArgument("epoch " + std::to_string(epoch) + " outside [0, " +
                          std::to_string(total_epochs) + ")");
  }
  const double e = static_cast<double>(epoch);
  const double total = static_cast<double>(total_epochs);
  const double warm = s.warmup_end * total;
  if (e < warm) return s.start + (s.peak - s.start) * e / warm;
  const double f = e / total;
  if (f < s.hold_end) return s.peak;
  if (f < s.mid_end) return s.mid;
  return s.final;
}

}  // namespace amkalign
