#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#include "amkalign/amk_mmd.hpp"
#include "amkalign/config.hpp"
#include "amkalign/encoder.hpp"
#include "amkalign/image.hpp"
#include "amkalign/pesam.hpp"
#include "amkalign/rng.hpp"

namespace amkalign {

/// One split of paired-modality samples. Sample i of each modality carries labels[i].
struct SplitData {
  TokenBatch rgb;
  TokenBatch ir;
  std::vector<int> labels;

  std::size_t size() const { return labels.size(); }
};

struct Dataset {
  SplitData train;
  SplitData test;
  int train_identities = 0;
  int test_identities = 0;
  std::vector<GrayImage> rgb_images;  // image mode only: train then test
  std::vector<GrayImage> ir_images;
};

/// Generator parameters for vector mode.
struct SyntheticSpec {
  std::vector<Matrix> shared;      // per token, token_dim × latent_dim
  std::vector<Matrix> nuisance;    // per token, token_dim × latent_dim
  Matrix distort_rgb, distort_ir;  // token_dim × latent_dim
  Matrix private_rgb, private_ir;  // token_dim × latent_dim, applied to the modality-private latent
  std::vector<double> offset_rgb, offset_ir;
};

namespace detail {

// Tokens in the upper half carry identity with no modality gap but heavy per-sample
// nuisance. Lower tokens carry the modality gap, modality-private identity cues and
// lighter nuisance.
inline bool upper_token(int t, int tokens) { return 2 * t < tokens; }
inline constexpr double kLowerNuisance = 0.5;
// Modality offsets are deterministic per modality, so they sit outside the variance
// normalization and are scaled up to keep the mean shift visible after it.
inline constexpr double kOffsetScale = 4.0;

inline void mat_vec_add(const Matrix& a, const std::vector<double>& x, double scale,
                        std::span<double> out) {
  for (std::size_t r = 0; r < a.rows(); ++r) {
    double s = 0.0;
    for (std::size_t c = 0; c < a.cols(); ++c) s += a(r, c) * x[c];
    out[r] += scale * s;
  }
}

}  // namespace detail

inline SyntheticSpec make_spec(const ExperimentConfig& cfg, Rng& rng) {
  const auto d = static_cast<std::size_t>(cfg.token_dim);
  const auto k = static_cast<std::size_t>(cfg.latent_dim);
  const double s = 1.0 / std::sqrt(static_cast<double>(k));
  SyntheticSpec spec;
  for (int t = 0; t < cfg.tokens; ++t) {
    spec.shared.push_back(random_normal_matrix(rng, d, k, s));
    spec.nuisance.push_back(random_normal_matrix(rng, d, k, s));
  }
  spec.distort_rgb = random_normal_matrix(rng, d, k, s);
  spec.distort_ir = random_normal_matrix(rng, d, k, s);
  spec.private_rgb = random_normal_matrix(rng, d, k, s);
  spec.private_ir = random_normal_matrix(rng, d, k, s);
  spec.offset_rgb = rng.normals(d);
  spec.offset_ir = rng.normals(d);
  return spec;
}

/// Identity latent z shared by both modalities plus one private latent per modality.
/// The private latent is fixed per identity but unrelated across modalities.
struct IdentityLatent {
  std::vector<double> z, w_rgb, w_ir;
};

/// x_t = (S_t z + g_t (D_m z + ρ P_m w_m + κ b_m) + ν_t N_t u + σ ε) / s_t, where s_t² is
/// the expected per-coordinate variance excluding the offset.
inline Matrix vector_tokens(const ExperimentConfig& cfg, const SyntheticSpec& spec,
                            const IdentityLatent& id, Modality m, Rng& rng) {
  const auto& z = id.z;
  const auto& w = m == Modality::RGB ? id.w_rgb : id.w_ir;
  const Matrix& priv = m == Modality::RGB ? spec.private_rgb : spec.private_ir;
  const double rho = cfg.modality_private;
  const auto d = static_cast<std::size_t>(cfg.token_dim);
  Matrix out(static_cast<std::size_t>(cfg.tokens), d);
  const auto u = rng.normals(static_cast<std::size_t>(cfg.latent_dim));
  const Matrix& dist = m == Modality::RGB ? spec.distort_rgb : spec.distort_ir;
  const auto& off = m == Modality::RGB ? spec.offset_rgb : spec.offset_ir;
  for (int t = 0; t < cfg.tokens; ++t) {
    const bool upper = detail::upper_token(t, cfg.tokens);
    const double gap = upper ? 0.0 : cfg.modality_gap;
    const double nu = cfg.nuisance * (upper ? 1.0 : detail::kLowerNuisance);
    const double scale =
        1.0 / std::sqrt(1.0 + gap * gap * (2.0 + rho * rho) + nu * nu + cfg.noise * cfg.noise);
    auto row = out.row(static_cast<std::size_t>(t));
    detail::mat_vec_add(spec.shared[static_cast<std::size_t>(t)], z, 1.0, row);
    detail::mat_vec_add(dist, z, gap, row);
    detail::mat_vec_add(priv, w, gap * rho, row);
    detail::mat_vec_add(spec.nuisance[static_cast<std::size_t>(t)], u, nu, row);
    for (std::size_t c = 0; c < d; ++c) {
      row[c] = scale * (row[c] + detail::kOffsetScale * gap * off[c] + cfg.noise * rng.normal());
    }
  }
  return out;
}

namespace detail {

inline SplitData assemble(std::vector<Matrix>& rgb, std::vector<Matrix>& ir, std::vector<int> labels,
                          std::size_t per_sample, std::size_t dim) {
  SplitData s;
  s.labels = std::move(labels);
  Matrix a(rgb.size() * per_sample, dim), b(ir.size() * per_sample, dim);
  for (std::size_t i = 0; i < rgb.size(); ++i) {
    std::copy(rgb[i].data().begin(), rgb[i].data().end(),
              a.data().begin() + static_cast<long>(i * per_sample * dim));
    std::copy(ir[i].data().begin(), ir[i].data().end(),
              b.data().begin() + static_cast<long>(i * per_sample * dim));
  }
  s.rgb = {std::move(a), per_sample};
  s.ir = {std::move(b), per_sample};
  return s;
}

}  // namespace detail

inline Dataset gen_vector_dataset(const ExperimentConfig& cfg) {
  cfg.validate();
  Rng rng = Rng(cfg.seed).split(1);
  const SyntheticSpec spec = make_spec(cfg, rng);
  Dataset ds;
  ds.train_identities = cfg.train_identities();
  ds.test_identities = cfg.test_identities();
  for (int split = 0; split < 2; ++split) {
    const int first = split == 0 ? 0 : ds.train_identities;
    const int count = split == 0 ? ds.train_identities : ds.test_identities;
    std::vector<Matrix> rgb, ir;
    std::vector<int> labels;
    for (int id = 0; id < count; ++id) {
      const auto k = static_cast<std::size_t>(cfg.latent_dim);
      IdentityLatent z{rng.normals(k), rng.normals(k), rng.normals(k)};
      for (int s = 0; s < cfg.samples_per_identity; ++s) {
        rgb.push_back(vector_tokens(cfg, spec, z, Modality::RGB, rng));
        ir.push_back(vector_tokens(cfg, spec, z, Modality::IR, rng));
        labels.push_back(split == 0 ? id : first + id);
      }
    }
    auto data = detail::assemble(rgb, ir, std::move(labels), static_cast<std::size_t>(cfg.tokens),
                                 static_cast<std::size_t>(cfg.token_dim));
    (split == 0 ? ds.train : ds.test) = std::move(data);
  }
  return ds;
}

/// Per-identity silhouette geometry and clothing intensities.
struct Silhouette {
  double head_r, shoulder_w, torso_len, leg_gap, upper_tone, lower_tone, background;
};

inline Silhouette random_silhouette(Rng& rng) {
  return {rng.uniform(0.07, 0.11), rng.uniform(0.28, 0.42), rng.uniform(0.28, 0.38),
          rng.uniform(0.04, 0.12), rng.uniform(0.35, 0.7),  rng.uniform(0.3, 0.65),
          rng.uniform(0.15, 0.25)};
}

/// Head ellipse, torso ellipse and two legs on a flat background.
inline GrayImage render_silhouette(const Silhouette& s, std::size_t h, std::size_t w, double dx,
                                   double scale) {
  Matrix m(h, w, s.background);
  const double W = static_cast<double>(w), H = static_cast<double>(h);
  const double cx = 0.5 + dx;
  const double head_y = 0.1, torso_top = head_y + s.head_r * 1.2;
  const double torso_y = torso_top + s.torso_len / 2;
  const double leg_top = torso_top + s.torso_len * 0.9;
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < w; ++x) {
      const double u = (static_cast<double>(x) + 0.5) / W, v = (static_cast<double>(y) + 0.5) / H;
      const double hx = (u - cx) / (s.head_r * scale * H / W), hy = (v - head_y) / (s.head_r * scale);
      const double tx = (u - cx) / (s.shoulder_w * scale / 2);
      const double ty = (v - torso_y) / (s.torso_len * scale / 2);
      if (hx * hx + hy * hy <= 1.0) {
        m(y, x) = s.upper_tone + 0.15;
      } else if (tx * tx + ty * ty <= 1.0) {
        m(y, x) = s.upper_tone;
      } else if (v >= leg_top && v <= 0.97) {
        const double off = std::abs(u - cx);
        if (off >= s.leg_gap / 2 && off <= s.leg_gap / 2 + 0.09 * scale) m(y, x) = s.lower_tone;
      }
    }
  }
  return GrayImage(std::move(m));
}

/// 3×3 box blur of 1 − img with reflect-101 borders.
inline GrayImage ir_from_visible(const GrayImage& img) {
  Matrix inv = img.pixels();
  for (double& v : inv.data()) v = 1.0 - v;
  return GrayImage(correlate_reflect101(inv, Matrix(3, 3, 1.0 / 9.0)));
}

/// L horizontal strips; each token holds column-binned means of A⊙img then of PC.
inline Matrix image_tokens(const GrayImage& img, const LogGaborBank& bank, int tokens,
                           int token_dim) {
  PcParams params;
  params.noise_threshold = finest_scale_noise_threshold(img, bank);
  const GrayImage pc = phase_congruency(img, bank, params);
  const GrayImage att = edge_attention(pc, {});
  const Matrix feat = apply_attention(img.pixels(), att);
  const std::size_t h = img.height(), w = img.width();
  const std::size_t strip = h / static_cast<std::size_t>(tokens);
  const std::size_t bins = static_cast<std::size_t>(token_dim) / 2;
  Matrix out(static_cast<std::size_t>(tokens), static_cast<std::size_t>(token_dim));
  for (std::size_t t = 0; t < static_cast<std::size_t>(tokens); ++t) {
    for (std::size_t b = 0; b < bins; ++b) {
      const std::size_t x0 = b * w / bins, x1 = std::max(x0 + 1, (b + 1) * w / bins);
      double a = 0.0, p = 0.0;
      for (std::size_t y = t * strip; y < (t + 1) * strip; ++y) {
        for (std::size_t x = x0; x < x1; ++x) {
          a += feat(y, x);
          p += pc(y, x);
        }
      }
      const double n = static_cast<double>(strip * (x1 - x0));
      out(t, b) = a / n;
      out(t, bins + b) = p / n;
    }
  }
  return out;
}

inline Dataset gen_image_dataset(const ExperimentConfig& cfg) {
  ExperimentConfig c = cfg;
  c.mode = DataMode::Image;
  c.validate();
  Rng rng = Rng(c.seed).split(1);
  const auto h = static_cast<std::size_t>(c.image_height), w = static_cast<std::size_t>(c.image_width);
  const LogGaborBank bank = build_log_gabor_bank(h, w);
  Dataset ds;
  ds.train_identities = c.train_identities();
  ds.test_identities = c.test_identities();
  for (int split = 0; split < 2; ++split) {
    const int first = split == 0 ? 0 : ds.train_identities;
    const int count = split == 0 ? ds.train_identities : ds.test_identities;
    std::vector<Matrix> rgb, ir;
    std::vector<int> labels;
    for (int id = 0; id < count; ++id) {
      const Silhouette s = random_silhouette(rng);
      for (int k = 0; k < c.samples_per_identity; ++k) {
        const double dx = rng.uniform(-0.04, 0.04), scale = rng.uniform(0.92, 1.08);
        const GrayImage base = render_silhouette(s, h, w, dx, scale);
        Matrix jittered = base.pixels();
        const double jitter = rng.uniform(-c.brightness_jitter, c.brightness_jitter);
        for (double& v : jittered.data()) v += jitter;
        GrayImage vis(std::move(jittered));
        GrayImage irimg = ir_from_visible(base);
        rgb.push_back(image_tokens(vis, bank, c.tokens, c.token_dim));
        ir.push_back(image_tokens(irimg, bank, c.tokens, c.token_dim));
        ds.rgb_images.push_back(std::move(vis));
        ds.ir_images.push_back(std::move(irimg));
        labels.push_back(first + id);
      }
    }
    auto data = detail::assemble(rgb, ir, std::move(labels), static_cast<std::size_t>(c.tokens),
                                 static_cast<std::size_t>(c.token_dim));
    (split == 0 ? ds.train : ds.test) = std::move(data);
  }
  return ds;
}

inline Dataset gen_dataset(const ExperimentConfig& cfg) {
  return cfg.mode == DataMode::Vector ? gen_vector_dataset(cfg) : gen_image_dataset(cfg);
}

/// Rows are whole samples (all tokens concatenated).
inline Matrix flatten_samples(const TokenBatch& b) {
  b.validate();
  const std::size_t n = b.samples();
  return Matrix(n, b.tokens.size() / n, b.tokens.data());
}

/// AMK-MMD² between the RGB and IR clouds of a split, on flattened raw tokens.
inline double modality_mmd2(const SplitData& s, const KernelSettings& ks = {}) {
  const Matrix x = flatten_samples(s.rgb), y = flatten_samples(s.ir);
  return mmd2_unbiased(x, y, ks.resolve(x, y));
}

}  // namespace amkalign
