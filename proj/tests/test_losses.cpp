#include <gtest/gtest.h>

#include <cmath>

#include "amkalign/losses.hpp"
#include "amkalign/rng.hpp"
#include "oracles.hpp"

using namespace amkalign;

namespace {

/// Random orthogonal d×d matrix by Gram-Schmidt.
Matrix random_rotation(Rng& rng, std::size_t d) {
  Matrix q = random_normal_matrix(rng, d, d);
  for (std::size_t i = 0; i < d; ++i) {
    for (std::size_t k = 0; k < i; ++k) {
      double dot = 0.0;
      for (std::size_t t = 0; t < d; ++t) dot += q(i, t) * q(k, t);
      for (std::size_t t = 0; t < d; ++t) q(i, t) -= dot * q(k, t);
    }
    const double nrm = std::sqrt(squared_norm(q.row(i)));
    for (std::size_t t = 0; t < d; ++t) q(i, t) /= nrm;
  }
  return q;
}

/// Labels 0..k-1 each repeated r times.
std::vector<int> grouped(int k, int r) {
  std::vector<int> l;
  for (int i = 0; i < k; ++i) {
    for (int j = 0; j < r; ++j) l.push_back(i);
  }
  return l;
}

double triplet_oracle(const Matrix& e, const std::vector<int>& l, double margin) {
  double total = 0.0;
  for (std::size_t a = 0; a < e.rows(); ++a) {
    double hp = -1.0, hn = 1e300;
    for (std::size_t j = 0; j < e.rows(); ++j) {
      if (j == a) continue;
      const double d = std::sqrt(oracle::sq_dist(e, a, e, j));
      if (l[j] == l[a]) hp = std::max(hp, d);
      else hn = std::min(hn, d);
    }
    total += std::max(0.0, hp - hn + margin);
  }
  return total / static_cast<double>(e.rows());
}

}  // namespace

TEST(IdLoss, HandValues) {
  EXPECT_NEAR(id_loss(Matrix(3, 4), {0, 1, 3}).value, std::log(4.0), 1e-12);
  EXPECT_LE(id_loss(Matrix{{1000, 0, 0}}, {0}).value, 1e-9);
  EXPECT_NEAR(id_loss(Matrix{{1, 0}}, {0}).value, -std::log(std::exp(1.0) / (std::exp(1.0) + 1)),
              1e-12);
  EXPECT_NEAR(id_loss(Matrix{{1, 0}}, {0}).value, 0.313262, 1e-6);
}

TEST(IdLoss, Errors) {
  EXPECT_THROW(id_loss(Matrix(1, 3), {3}), InvalidArgument);
  EXPECT_THROW(id_loss(Matrix(1, 3), {-1}), InvalidArgument);
  EXPECT_THROW(id_loss(Matrix(0, 3), {}), InvalidArgument);
}

TEST(IdLoss, ShiftInvariance) {
  Rng rng(2);
  for (int trial = 0; trial < 50; ++trial) {
    Matrix z = random_normal_matrix(rng, 5, 6, 3.0);
    std::vector<int> l(5);
    for (int& v : l) v = static_cast<int>(rng.below(6));
    const double base = id_loss(z, l).value;
    for (std::size_t i = 0; i < 5; ++i) {
      const double c = rng.uniform(-50, 50);
      for (double& v : z.row(i)) v += c;
    }
    EXPECT_NEAR(id_loss(z, l).value, base, 1e-12);
  }
}

TEST(IdLoss, GradientMatchesFiniteDifferences) {
  Rng rng(3);
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t n = 1 + rng.below(6), c = 2 + rng.below(5);
    Matrix z = random_normal_matrix(rng, n, c, 2.0);
    std::vector<int> l(n);
    for (int& v : l) v = static_cast<int>(rng.below(c));
    const auto a = id_loss(z, l);
    const auto num = oracle::numeric_gradient(z.data(), [&]() { return id_loss(z, l).value; });
    EXPECT_LE(oracle::max_rel_err(a.grad.data(), num), 1e-4);
  }
}

TEST(TripletLoss, IdenticalEmbeddingsGiveMargin) {
  EXPECT_DOUBLE_EQ(triplet_loss_hard(Matrix(6, 3, 1.5), grouped(3, 2), 0.3).value, 0.3);
}

TEST(TripletLoss, SatisfiedMarginIsZero) {
  const Matrix e{{0}, {0}, {1}, {1}, {5}, {5}};
  const auto r = triplet_loss_hard(e, grouped(3, 2), 0.3);
  EXPECT_EQ(r.value, 0.0);
  for (double g : r.grad.data()) EXPECT_EQ(g, 0.0);
}

TEST(TripletLoss, HandFourPoints) {
  // A = {0, 1}, B = {5, 9}.
  // a=0: pos 1, neg 5 → 1−5+0.3 < 0 → 0
  // a=1: pos 1, neg 4 → 0
  // a=5: pos 4, neg 4 → 0.3
  // a=9: pos 4, neg 8 → 0
  const Matrix e{{0}, {1}, {5}, {9}};
  EXPECT_NEAR(triplet_loss_hard(e, {0, 0, 1, 1}, 0.3).value, 0.3 / 4.0, 1e-15);
}

TEST(TripletLoss, MatchesOracle) {
  Rng rng(4);
  for (int trial = 0; trial < 50; ++trial) {
    const Matrix e = random_normal_matrix(rng, 8, 4);
    const auto l = grouped(4, 2);
    EXPECT_NEAR(triplet_loss_hard(e, l, 0.5).value, triplet_oracle(e, l, 0.5), 1e-12);
  }
}

TEST(TripletLoss, MissingPositiveOrNegative) {
  try {
    triplet_loss_hard(Matrix{{0}, {1}, {2}}, {0, 0, 1}, 0.3);
    FAIL();
  } catch (const SamplingError& e) {
    EXPECT_NE(std::string(e.what()).find("anchor 2"), std::string::npos);
  }
  EXPECT_THROW(triplet_loss_hard(Matrix{{0}, {1}}, {0, 0}, 0.3), SamplingError);
}

TEST(TripletLoss, RotationInvariance) {
  Rng rng(5);
  for (int trial = 0; trial < 20; ++trial) {
    const Matrix e = random_normal_matrix(rng, 12, 5);
    const auto l = grouped(4, 3);
    const Matrix r = matmul(e, random_rotation(rng, 5));
    EXPECT_NEAR(triplet_loss_hard(e, l, 0.3).value, triplet_loss_hard(r, l, 0.3).value, 1e-9);
  }
}

TEST(TripletLoss, GradientMatchesFiniteDifferences) {
  Rng rng(6);
  for (int trial = 0; trial < 50; ++trial) {
    Matrix e = random_normal_matrix(rng, 8, 3);
    const auto l = grouped(4, 2);
    const double margin = rng.uniform(0.5, 2.0);
    const auto a = triplet_loss_hard(e, l, margin);
    const auto num =
        oracle::numeric_gradient(e.data(), [&]() { return triplet_loss_hard(e, l, margin).value; });
    EXPECT_LE(oracle::max_rel_err(a.grad.data(), num), 1e-4) << "trial " << trial;
  }
}

namespace {

BatchOutputs random_outputs(Rng& rng, std::size_t n, std::size_t df, std::size_t de, std::size_t c,
                            bool cross) {
  BatchOutputs o;
  o.labels = grouped(static_cast<int>(n / 2), 2);
  o.logits = random_normal_matrix(rng, n, c);
  o.g_rgb = random_normal_matrix(rng, n, df);
  o.g_ir = random_normal_matrix(rng, n, df);
  o.p_rgb = random_normal_matrix(rng, n, df);
  o.p_ir = random_normal_matrix(rng, n, df);
  o.intra_rgb = random_normal_matrix(rng, n, de);
  o.intra_ir = random_normal_matrix(rng, n, de);
  if (cross) {
    o.cross_ri = random_normal_matrix(rng, n, de);
    o.cross_ir = random_normal_matrix(rng, n, de);
  }
  return o;
}

}  // namespace

TEST(AlignmentLosses, IdenticalCloudsGiveZero) {
  // Every row of every operand is the same point; with distinct rows the
  // unbiased estimate of mmd²(X, X) is negative, not zero.
  BatchOutputs o;
  Matrix m(6, 4);
  for (std::size_t i = 0; i < 6; ++i) {
    m(i, 0) = 0.5;
    m(i, 2) = -1.0;
  }
  KernelSettings ks;
  ks.bandwidths = {0.5, 1.0, 2.0};
  o.g_rgb = o.g_ir = o.p_rgb = o.p_ir = m;
  o.intra_rgb = o.intra_ir = m;
  const auto k = resolve_alignment_kernels(o, ks, true, true);
  const auto r = alignment_losses(o, k);
  EXPECT_NEAR(r.imdal, 0.0, 1e-15);
  EXPECT_NEAR(r.idal, 0.0, 1e-15);
}

TEST(AlignmentLosses, ShiftedIrMatchesLoopOracle) {
  Rng rng(8);
  BatchOutputs o = random_outputs(rng, 8, 4, 5, 4, false);
  for (std::size_t i = 0; i < o.intra_ir.rows(); ++i) {
    for (std::size_t j = 0; j < o.intra_ir.cols(); ++j) o.intra_ir(i, j) = o.intra_rgb(i, j) + 1.0;
  }
  KernelSettings ks;
  const auto k = resolve_alignment_kernels(o, ks, true, true);
  const auto r = alignment_losses(o, k);
  EXPECT_NEAR(r.idal, oracle::mmd2(o.intra_rgb, o.intra_ir, k.idal->bandwidths, k.idal->logits),
              1e-12);
  EXPECT_NEAR(r.imdal,
              oracle::mmd2(o.g_rgb, o.p_rgb, k.imdal_rgb->bandwidths, k.imdal_rgb->logits) +
                  oracle::mmd2(o.g_ir, o.p_ir, k.imdal_ir->bandwidths, k.imdal_ir->logits),
              1e-12);
  EXPECT_GT(r.idal, 0.0);
}

TEST(TotalObjective, DecompositionAndMasking) {
  Rng rng(9);
  for (int trial = 0; trial < 20; ++trial) {
    const auto o = random_outputs(rng, 8, 3, 4, 5, trial % 2 == 0);
    const auto k = resolve_alignment_kernels(o, {}, true, true);
    LossWeights w{rng.uniform(0, 2), rng.uniform(0, 2), rng.uniform(0, 2), rng.uniform(0, 1)};
    const auto r = total_objective(o, w, k);
    EXPECT_NEAR(r.total,
                r.l_id + w.lambda_tri * r.l_tri + w.w_intra * r.l_imdal + w.w_inter * r.l_idal,
                1e-12);

    LossWeights only_id{0, 0, 0, w.margin};
    EXPECT_EQ(total_objective(o, only_id, k).total, r.l_id);

    LossWeights doubled = w;
    doubled.w_inter *= 2.0;
    const auto r2 = total_objective(o, doubled, k);
    EXPECT_NEAR(r2.total - r.total, w.w_inter * r.l_idal, 1e-12);
  }
}

TEST(TotalObjective, SweepEndpointConfiguration) {
  Rng rng(10);
  const auto o = random_outputs(rng, 8, 3, 4, 5, true);
  const auto k = resolve_alignment_kernels(o, {}, true, true);
  const auto r = total_objective(o, {0.0, 1.0, 1.0, 0.3}, k);
  EXPECT_EQ(r.l_imdal, 0.0);
  EXPECT_GT(r.l_idal, 0.0);
  EXPECT_NEAR(r.total, r.l_id + r.l_tri + r.l_idal, 1e-12);
}

TEST(TotalObjective, NegativeWeightRejected) {
  Rng rng(11);
  const auto o = random_outputs(rng, 4, 2, 2, 2, false);
  EXPECT_THROW(total_objective(o, {-0.1, 0.5, 1.0, 0.3}, {}), InvalidArgument);
}

TEST(TotalObjective, GradientMatchesFiniteDifferences) {
  Rng rng(12);
  for (int trial = 0; trial < 50; ++trial) {
    auto o = random_outputs(rng, 8, 6, 6, 4, trial % 2 == 0);
    KernelSettings ks;
    ks.logits = rng.normals(5);
    const auto k = resolve_alignment_kernels(o, ks, true, true);
    const LossWeights w{0.4, 0.6, 1.0, 2.0};
    const auto r = total_objective(o, w, k);
    auto f = [&]() { return total_objective(o, w, k).total; };
    const std::pair<Matrix*, const Matrix*> fields[] = {
        {&o.logits, &r.dlogits},     {&o.g_rgb, &r.dg_rgb},         {&o.g_ir, &r.dg_ir},
        {&o.p_rgb, &r.dp_rgb},       {&o.p_ir, &r.dp_ir},           {&o.intra_rgb, &r.dintra_rgb},
        {&o.intra_ir, &r.dintra_ir}, {&o.cross_ri, &r.dcross_ri}, {&o.cross_ir, &r.dcross_ir}};
    for (const auto& [value, grad] : fields) {
      const auto num = oracle::numeric_gradient(value->data(), f);
      EXPECT_LE(oracle::max_rel_err(grad->data(), num), 1e-4) << "trial " << trial;
    }
    // Kernel logits.
    std::vector<double> logits = ks.logits;
    const auto num = oracle::numeric_gradient(logits, [&]() {
      AlignmentKernels kk = k;
      for (auto* kp : {&kk.imdal_rgb, &kk.imdal_ir, &kk.idal}) (*kp)->logits = logits;
      return total_objective(o, w, kk).total;
    });
    EXPECT_LE(oracle::max_rel_err(r.dkernel_logits, num), 1e-4) << "trial " << trial;
  }
}
