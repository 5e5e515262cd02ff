#include <gtest/gtest.h>

#include <cmath>

#include "amkalign/eval.hpp"
#include "amkalign/rng.hpp"
#include "oracles.hpp"
#include "retrieval_oracle.hpp"

using namespace amkalign;

namespace {

FeatureBatch fb(Matrix m, std::vector<int> l) { return FeatureBatch(std::move(m), std::move(l)); }

}  // namespace

TEST(RankGallery, ExactMatchFirst) {
  RetrievalSet rs{fb({{0.5, 0.5}}, {0}), fb({{3, 3}, {0.5, 0.5}, {1, 0}}, {1, 0, 2})};
  EXPECT_EQ(rank_gallery(rs)[0][0], 1u);
}

TEST(RankGallery, TiesKeepGalleryOrder) {
  RetrievalSet rs{fb({{0, 1}}, {0}), fb(Matrix(5, 2, 0.25), {0, 1, 2, 3, 4})};
  EXPECT_EQ(rank_gallery(rs)[0], (std::vector<std::size_t>{0, 1, 2, 3, 4}));
}

TEST(RankGallery, HandSorted) {
  // distances 2, 0.5, 1
  RetrievalSet rs{fb({{0}}, {0}), fb({{2}, {-0.5}, {1}}, {0, 1, 2})};
  EXPECT_EQ(rank_gallery(rs)[0], (std::vector<std::size_t>{1, 2, 0}));
}

TEST(RankGallery, WidthMismatch) {
  RetrievalSet rs{fb({{0}}, {0}), fb({{2, 1}}, {0})};
  EXPECT_THROW(rank_gallery(rs), ShapeError);
}

TEST(Metrics, PerfectRetrieval) {
  RetrievalSet rs{fb({{0}, {10}, {20}}, {0, 1, 2}), fb({{20.1}, {0.1}, {10.1}}, {2, 0, 1})};
  const auto r = cmc_map_minp(rs, {1});
  EXPECT_EQ(r.cmc[0].second, 1.0);
  EXPECT_EQ(r.map, 1.0);
  EXPECT_EQ(r.minp, 1.0);
}

TEST(Metrics, HandApAndInp) {
  // Relevant items land at ranks 1 and 3.
  RetrievalSet rs{fb({{0}}, {7}), fb({{0.1}, {0.2}, {0.3}, {0.4}}, {7, 1, 7, 2})};
  const auto r = cmc_map_minp(rs, {1, 2});
  EXPECT_NEAR(r.map, 5.0 / 6.0, 1e-15);
  EXPECT_NEAR(r.minp, 2.0 / 3.0, 1e-15);
  EXPECT_EQ(r.cmc[0].second, 1.0);
}

TEST(Metrics, MissingIdentityNamesQuery) {
  RetrievalSet rs{fb({{0}, {1}}, {0, 5}), fb({{0.1}, {0.2}}, {0, 1})};
  try {
    cmc_map_minp(rs);
    FAIL();
  } catch (const InvalidSetup& e) {
    EXPECT_NE(std::string(e.what()).find("query 1"), std::string::npos);
  }
}

TEST(Metrics, MatchesBruteForceOracle) {
  Rng rng(21);
  for (int trial = 0; trial < 100; ++trial) {
    const auto rs = retrieval_oracle::random_set(rng, 1 + rng.below(8), 1 + rng.below(16), 3);
    const auto r = cmc_map_minp(rs, {1, 2, 3, 5, 16});
    const auto o = retrieval_oracle::evaluate(rs);
    EXPECT_EQ(r.map, o.map);
    EXPECT_EQ(r.minp, o.minp);
    for (std::size_t k = 0; k < r.cmc_curve.size(); ++k) EXPECT_EQ(r.cmc_curve[k], o.cmc[k]);
  }
}

TEST(Metrics, CurveIsMonotoneAndEndsAtOne) {
  Rng rng(22);
  for (int trial = 0; trial < 50; ++trial) {
    const auto rs = retrieval_oracle::random_set(rng, 6, 12, 4);
    const auto r = cmc_map_minp(rs);
    for (std::size_t k = 1; k < r.cmc_curve.size(); ++k) EXPECT_GE(r.cmc_curve[k], r.cmc_curve[k - 1]);
    EXPECT_EQ(r.cmc_curve.back(), 1.0);
    EXPECT_GE(r.map, 0.0);
    EXPECT_LE(r.map, 1.0);
    EXPECT_GT(r.minp, 0.0);
    EXPECT_LE(r.minp, 1.0);
  }
}

TEST(Metrics, SingleRelevantInpIsReciprocalRank) {
  Rng rng(23);
  for (int trial = 0; trial < 50; ++trial) {
    // Gallery labels are all distinct, so each query has one relevant item.
    const std::size_t ng = 10;
    std::vector<int> gl(ng);
    for (std::size_t i = 0; i < ng; ++i) gl[i] = static_cast<int>(i);
    std::vector<int> ql{static_cast<int>(rng.below(ng))};
    RetrievalSet rs{fb(random_normal_matrix(rng, 1, 3), ql), fb(random_normal_matrix(rng, ng, 3), gl)};
    const auto r = cmc_map_minp(rs);
    const auto order = rank_gallery(rs)[0];
    const auto pos = std::find(order.begin(), order.end(), static_cast<std::size_t>(ql[0])) - order.begin();
    EXPECT_DOUBLE_EQ(r.minp, 1.0 / static_cast<double>(pos + 1));
    EXPECT_DOUBLE_EQ(r.map, r.minp);
  }
}

TEST(Metrics, GalleryPermutationInvariance) {
  Rng rng(24);
  for (int trial = 0; trial < 50; ++trial) {
    const auto rs = retrieval_oracle::random_set(rng, 5, 12, 3);
    std::vector<std::size_t> perm(12);
    for (std::size_t i = 0; i < 12; ++i) perm[i] = i;
    rng.shuffle(perm);
    Matrix g(12, rs.gallery.dim());
    std::vector<int> l(12);
    for (std::size_t i = 0; i < 12; ++i) {
      for (std::size_t k = 0; k < g.cols(); ++k) g(i, k) = rs.gallery.features(perm[i], k);
      l[i] = rs.gallery.labels[perm[i]];
    }
    RetrievalSet shuffled{rs.query, fb(g, l)};
    const auto a = cmc_map_minp(rs), b = cmc_map_minp(shuffled);
    EXPECT_EQ(a.cmc_curve, b.cmc_curve);
    EXPECT_NEAR(a.map, b.map, 1e-15);
    EXPECT_NEAR(a.minp, b.minp, 1e-15);
  }
}

TEST(Metrics, SelfExclusionSanityMode) {
  Matrix m{{0, 0}, {0.1, 0}, {5, 5}, {5.1, 5}};
  RetrievalSet rs{fb(m, {0, 0, 1, 1}), fb(m, {0, 0, 1, 1}), Distance::Euclidean, true};
  const auto r = cmc_map_minp(rs, {1});
  EXPECT_EQ(r.cmc[0].second, 1.0);
  EXPECT_EQ(rank_gallery(rs)[0].size(), 3u);
}

TEST(DistanceGapTest, HandCases) {
  const auto z = distance_gap(fb(Matrix(4, 3, 0.7), {0, 0, 1, 1}));
  EXPECT_EQ(z.intra_mean, 0.0);
  EXPECT_EQ(z.inter_mean, 0.0);
  EXPECT_EQ(z.gap, 0.0);
  const auto g = distance_gap(fb({{0}, {0}, {1}, {1}}, {0, 0, 1, 1}));
  EXPECT_EQ(g.intra_mean, 0.0);
  EXPECT_EQ(g.inter_mean, 1.0);
  EXPECT_EQ(g.gap, 1.0);
}

TEST(DistanceGapTest, MatchesDoubleLoop) {
  Rng rng(25);
  const Matrix e = random_normal_matrix(rng, 12, 4);
  std::vector<int> l{0, 0, 0, 1, 1, 2, 2, 2, 2, 3, 3, 1};
  double intra = 0, inter = 0;
  int ni = 0, ne = 0;
  for (std::size_t i = 0; i < 12; ++i) {
    for (std::size_t j = 0; j < 12; ++j) {
      if (i == j) continue;
      const double d = std::sqrt(oracle::sq_dist(e, i, e, j));
      if (l[i] == l[j]) {
        intra += d;
        ++ni;
      } else {
        inter += d;
        ++ne;
      }
    }
  }
  const auto g = distance_gap(fb(e, l));
  EXPECT_NEAR(g.intra_mean, intra / ni, 1e-12);
  EXPECT_NEAR(g.inter_mean, inter / ne, 1e-12);
  EXPECT_NEAR(g.gap, inter / ne - intra / ni, 1e-12);
}

TEST(DistanceGapTest, RotationInvariance) {
  Rng rng(26);
  const Matrix e = random_normal_matrix(rng, 10, 2);
  const double c = std::cos(0.7), s = std::sin(0.7);
  const Matrix rot{{c, -s}, {s, c}};
  const std::vector<int> l{0, 0, 1, 1, 2, 2, 3, 3, 4, 4};
  const auto a = distance_gap(fb(e, l)), b = distance_gap(fb(matmul(e, rot), l));
  EXPECT_NEAR(a.gap, b.gap, 1e-9);
  EXPECT_NEAR(a.intra_mean, b.intra_mean, 1e-9);
}

TEST(DistanceGapTest, DegenerateLabels) {
  EXPECT_THROW(distance_gap(fb({{0}}, {0})), InvalidSetup);
  EXPECT_THROW(distance_gap(fb({{0}, {1}}, {0, 0})), InvalidSetup);
  EXPECT_THROW(distance_gap(fb({{0}, {1}, {2}}, {0, 0, 1})), InvalidSetup);
}
