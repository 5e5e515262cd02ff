#include <gtest/gtest.h>

#include <cmath>

#include "amkalign/pesam.hpp"
#include "pc_oracle.hpp"
#include "test_images.hpp"

using namespace amkalign;

namespace {

double max_abs_diff(const Matrix& a, const Matrix& b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a.data()[i] - b.data()[i]));
  return m;
}

GrayImage shifted(const GrayImage& img, double offset, double gain = 1.0) {
  Matrix m = img.pixels();
  for (double& v : m.data()) v = gain * v + offset;
  return GrayImage(m);
}

}  // namespace

TEST(LogGaborBank, DcIsZeroAndCentersFollowLadder) {
  LogGaborSettings s;
  s.orientations = 1;
  const auto bank = build_log_gabor_bank(32, 24, s);
  for (const auto& f : bank.filters) EXPECT_EQ(f(0, 0), 0.0);
  ASSERT_EQ(bank.center_frequencies.size(), 4u);
  EXPECT_NEAR(bank.center_frequencies[0], 1.0 / 3.0, 1e-15);
  EXPECT_NEAR(bank.center_frequencies[1], 1.0 / 6.3, 1e-15);
  EXPECT_NEAR(bank.center_frequencies[2], 1.0 / 13.23, 1e-15);
  EXPECT_NEAR(bank.center_frequencies[3], 1.0 / 27.783, 1e-15);
  EXPECT_EQ(bank.grid_rows, 64u);
  EXPECT_EQ(bank.grid_cols, 48u);
}

TEST(LogGaborBank, RadialPeakIsOne) {
  for (double fs : {1.0 / 3.0, 0.1, 0.02}) {
    EXPECT_EQ(log_gabor_radial(fs, fs, 0.55), 1.0);
    EXPECT_LT(log_gabor_radial(fs * 1.5, fs, 0.55), 1.0);
  }
  EXPECT_EQ(log_gabor_radial(0.0, 0.1, 0.55), 0.0);
}

TEST(LogGaborBank, AdjacentOrientationsOverlapAtHalfMax) {
  const double st = half_max_angular_spread(6);
  EXPECT_NEAR(log_gabor_angular(std::numbers::pi / 12.0, 0.0, st), 0.5, 1e-14);
}

TEST(LogGaborBank, InvalidGeometry) {
  EXPECT_THROW(build_log_gabor_bank(7, 16), InvalidArgument);
  LogGaborSettings s;
  s.scales = 1;
  EXPECT_THROW(build_log_gabor_bank(16, 16, s), InvalidArgument);
  s = {};
  s.mult = 1.0;
  EXPECT_THROW(build_log_gabor_bank(16, 16, s), InvalidArgument);
  s = {};
  s.min_wavelength = 1.5;
  EXPECT_THROW(build_log_gabor_bank(16, 16, s), InvalidArgument);
  s = {};
  s.orientations = 0;
  EXPECT_THROW(build_log_gabor_bank(16, 16, s), InvalidArgument);
}

TEST(PhaseCongruency, ConstantImageIsZero) {
  const auto bank = build_log_gabor_bank(16, 20);
  const auto pc = phase_congruency(GrayImage(16, 20, 0.37), bank);
  for (double v : pc.pixels().data()) EXPECT_LT(v, 1e-9);
}

TEST(PhaseCongruency, ShapeMismatch) {
  const auto bank = build_log_gabor_bank(16, 16);
  EXPECT_THROW(phase_congruency(GrayImage(16, 17, 0.5), bank), ShapeError);
}

TEST(PhaseCongruency, MatchesOneDimensionalOracleOnStepEdge) {
  const std::size_t h = 12, w = 48, col = 20;
  const auto img = testimg::vertical_step(h, w, col);
  const auto bank = build_log_gabor_bank(h, w);
  const auto pc = phase_congruency(img, bank);

  std::vector<double> row(w);
  for (std::size_t x = 0; x < w; ++x) row[x] = img(0, x);
  const auto ref = oracle::phase_congruency_1d(row);
  const auto ref_peak = oracle::argmax(ref);
  EXPECT_LE(std::abs(static_cast<long>(ref_peak) - static_cast<long>(col)), 1);
  for (std::size_t y = 0; y < h; ++y) {
    std::vector<double> r(w);
    for (std::size_t x = 0; x < w; ++x) {
      r[x] = pc(y, x);
      EXPECT_NEAR(r[x], ref[x], 1e-9) << "row " << y << " col " << x;
    }
    EXPECT_LE(std::abs(static_cast<long>(oracle::argmax(r)) - static_cast<long>(col)), 1);
  }
}

TEST(PhaseCongruency, RampEdgeLocalization) {
  const std::size_t h = 16, w = 64;
  for (std::size_t col : {18u, 31u, 40u}) {
    for (double width : {2.0, 4.0}) {
      const auto img = testimg::vertical_ramp(h, w, col, width);
      const auto pc = phase_congruency(img, build_log_gabor_bank(h, w));
      std::size_t hits = 0;
      for (std::size_t y = 0; y < h; ++y) {
        std::vector<double> r(w);
        for (std::size_t x = 0; x < w; ++x) r[x] = pc(y, x);
        if (std::abs(static_cast<long>(oracle::argmax(r)) - static_cast<long>(col)) <= 1) ++hits;
      }
      EXPECT_GE(hits * 100, 95 * h) << "col " << col << " width " << width;
    }
  }
}

TEST(PhaseCongruency, AdditiveOffsetInvariance) {
  Rng rng(31);
  const auto img = testimg::textured(rng, 24, 32, 0.1, 0.6);
  const auto bank = build_log_gabor_bank(24, 32);
  const auto a = phase_congruency_raw(img, bank, {});
  const auto b = phase_congruency_raw(shifted(img, 0.3), bank, {});
  EXPECT_LE(max_abs_diff(a, b), 1e-9);
}

TEST(PhaseCongruency, ContrastAndOffsetInvariance) {
  Rng rng(32);
  const auto img = testimg::textured(rng, 32, 32, 0.2, 0.8);
  const auto bank = build_log_gabor_bank(32, 32);
  const auto a = phase_congruency(img, bank);
  const auto b = phase_congruency(shifted(img, 0.2, 0.5), bank);
  EXPECT_LE(max_abs_diff(a.pixels(), b.pixels()), 1e-3);
}

TEST(PhaseCongruency, GainInvariance) {
  Rng rng(33);
  const auto img = testimg::textured(rng, 32, 40, 0.0, 0.5);
  const auto bank = build_log_gabor_bank(32, 40);
  const auto ref = phase_congruency(img, bank);
  for (double a : {0.5, 0.8, 1.25, 1.6, 2.0}) {
    const auto pc = phase_congruency(shifted(img, 0.0, a), bank);
    EXPECT_LE(max_abs_diff(ref.pixels(), pc.pixels()), 1e-3) << "gain " << a;
  }
}

TEST(PhaseCongruency, RangeOverCorpus) {
  Rng rng(34);
  const auto bank = build_log_gabor_bank(24, 24);
  for (int i = 0; i < 10; ++i) {
    const auto pc = phase_congruency(testimg::textured(rng, 24, 24, 0.0, 1.0), bank);
    for (double v : pc.pixels().data()) {
      EXPECT_GE(v, 0.0);
      EXPECT_LE(v, 1.0);
    }
  }
}

TEST(PhaseCongruency, ThresholdSuppresses) {
  Rng rng(35);
  const auto img = testimg::textured(rng, 24, 24);
  const auto bank = build_log_gabor_bank(24, 24);
  const auto loose = phase_congruency_raw(img, bank, {0.0, 1e-4});
  const auto strict = phase_congruency_raw(img, bank, {finest_scale_noise_threshold(img, bank), 1e-4});
  for (std::size_t i = 0; i < loose.size(); ++i) EXPECT_LE(strict.data()[i], loose.data()[i] + 1e-15);
  EXPECT_THROW(phase_congruency(img, bank, {-1.0, 1e-4}), InvalidArgument);
  EXPECT_THROW(phase_congruency(img, bank, {0.0, 0.0}), InvalidArgument);
}

TEST(EdgeAttention, ZeroMapGivesHalf) {
  AttentionParams p;
  p.kernel = Matrix{{0.3, -1.0, 2.0}, {0.1, 0.5, 0.7}, {-0.2, 0.9, 1.1}};
  const auto a = edge_attention(GrayImage(9, 9, 0.0), p);
  for (double v : a.pixels().data()) EXPECT_EQ(v, 0.5);
}

TEST(EdgeAttention, OneByOneKernelIsPointwise) {
  Rng rng(36);
  const auto pc = testimg::textured(rng, 10, 12, 0.0, 1.0);
  AttentionParams p;
  p.kernel = Matrix{{2.5}};
  p.bias = -0.7;
  const auto a = edge_attention(pc, p);
  for (std::size_t y = 0; y < 10; ++y) {
    for (std::size_t x = 0; x < 12; ++x) {
      EXPECT_NEAR(a(y, x), 1.0 / (1.0 + std::exp(-(2.5 * pc(y, x) - 0.7))), 1e-15);
    }
  }
}

TEST(EdgeAttention, AveragingKernelMatchesHandConvolution) {
  // 5x5 map; reflect-101 border: index -1 -> 1, index 5 -> 3.
  const Matrix m{{0.0, 0.1, 0.2, 0.3, 0.4},
                 {0.5, 0.6, 0.7, 0.8, 0.9},
                 {1.0, 0.9, 0.8, 0.7, 0.6},
                 {0.5, 0.4, 0.3, 0.2, 0.1},
                 {0.0, 0.2, 0.4, 0.6, 0.8}};
  AttentionParams p;
  p.kernel = Matrix(3, 3, 1.0 / 9.0);
  const auto a = edge_attention(GrayImage(m), p);
  auto at = [&](int y, int x) {
    auto r = [](int i) { return i < 0 ? -i : (i > 4 ? 8 - i : i); };
    return m(static_cast<std::size_t>(r(y)), static_cast<std::size_t>(r(x)));
  };
  for (int y = 0; y < 5; ++y) {
    for (int x = 0; x < 5; ++x) {
      double s = 0.0;
      for (int dy = -1; dy <= 1; ++dy) {
        for (int dx = -1; dx <= 1; ++dx) s += at(y + dy, x + dx);
      }
      EXPECT_NEAR(a(static_cast<std::size_t>(y), static_cast<std::size_t>(x)),
                  1.0 / (1.0 + std::exp(-s / 9.0)), 1e-12);
    }
  }
  // Corner (0,0) written out: rows {1,0,1} x cols {1,0,1}.
  const double corner = (0.6 + 0.5 + 0.6 + 0.1 + 0.0 + 0.1 + 0.6 + 0.5 + 0.6) / 9.0;
  EXPECT_NEAR(a(0, 0), 1.0 / (1.0 + std::exp(-corner)), 1e-12);
}

TEST(EdgeAttention, StrictlyInsideUnitInterval) {
  Rng rng(37);
  AttentionParams p;
  p.kernel = Matrix{{50.0, 50.0, 50.0}, {50.0, 50.0, 50.0}, {50.0, 50.0, 50.0}};
  p.bias = -10.0;
  const auto a = edge_attention(testimg::textured(rng, 12, 12, 0.0, 1.0), p);
  for (double v : a.pixels().data()) {
    EXPECT_GT(v, 0.0);
    EXPECT_LT(v, 1.0);
  }
  p.kernel = Matrix(2, 2, 1.0);
  EXPECT_THROW(edge_attention(GrayImage(8, 8, 0.1), p), InvalidArgument);
}

TEST(ApplyAttention, Cases) {
  const Matrix f{{2, 4}};
  EXPECT_EQ(apply_attention(f, GrayImage(Matrix{{1, 1}})), f);
  EXPECT_EQ(apply_attention(f, GrayImage(Matrix{{0, 0}})), (Matrix{{0, 0}}));
  EXPECT_EQ(apply_attention(f, GrayImage(Matrix{{0.5, 0.25}})), (Matrix{{1, 1}}));
  EXPECT_THROW(apply_attention(f, GrayImage(Matrix{{1, 1, 1}})), ShapeError);
}

TEST(AdaptiveFusion, Cases) {
  const Matrix a{{1, 4}}, b{{2, 5}}, c{{3, 9}};
  const auto mean = adaptive_fusion(a, b, c, {});
  EXPECT_NEAR(mean(0, 0), 2.0, 1e-15);
  EXPECT_NEAR(mean(0, 1), 6.0, 1e-15);

  const auto sat = adaptive_fusion(a, b, c, {{1000.0, 0.0, 0.0}});
  EXPECT_NEAR(sat(0, 0), 1.0, 1e-12);
  EXPECT_NEAR(sat(0, 1), 4.0, 1e-12);

  FusionLogits w{{std::log(0.2), std::log(0.3), std::log(0.5)}};
  EXPECT_NEAR(adaptive_fusion(Matrix{{1}}, Matrix{{2}}, Matrix{{3}}, w)(0, 0), 2.3, 1e-15);
  EXPECT_THROW(adaptive_fusion(a, Matrix{{1}}, c, {}), ShapeError);
}

TEST(AdaptiveFusion, ConvexHull) {
  Rng rng(38);
  for (int t = 0; t < 50; ++t) {
    const Matrix a = random_normal_matrix(rng, 3, 4), b = random_normal_matrix(rng, 3, 4),
                 c = random_normal_matrix(rng, 3, 4);
    const FusionLogits l{{rng.normal(0, 3), rng.normal(0, 3), rng.normal(0, 3)}};
    const auto f = adaptive_fusion(a, b, c, l);
    for (std::size_t i = 0; i < f.size(); ++i) {
      const double lo = std::min({a.data()[i], b.data()[i], c.data()[i]});
      const double hi = std::max({a.data()[i], b.data()[i], c.data()[i]});
      EXPECT_GE(f.data()[i], lo - 1e-12);
      EXPECT_LE(f.data()[i], hi + 1e-12);
    }
  }
}
