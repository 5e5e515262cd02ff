#pragma once

#include <algorithm>
#include <cmath>
#include <string>
#include <utility>
#include <vector>

#include "amkalign/feature_batch.hpp"

namespace amkalign {

enum class Distance { Euclidean, Cosine };

struct RetrievalSet {
  FeatureBatch query;
  FeatureBatch gallery;
  Distance distance = Distance::Euclidean;
  bool exclude_self = false;  // gallery row i is skipped for query i

  void validate() const {
    query.validate();
    gallery.validate();
    if (query.dim() != gallery.dim()) {
      throw ShapeError("query width " + std::to_string(query.dim()) + " != gallery width " +
                       std::to_string(gallery.dim()));
    }
    if (exclude_self && query.size() != gallery.size()) {
      throw ShapeError("self-exclusion needs query and gallery of equal size");
    }
  }
};

inline double distance(std::span<const double> a, std::span<const double> b, Distance kind) {
  if (kind == Distance::Euclidean) {
    double s = 0.0;
    for (std::size_t k = 0; k < a.size(); ++k) {
      const double d = a[k] - b[k];
      s += d * d;
    }
    return std::sqrt(s);
  }
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) {
    dot += a[k] * b[k];
    na += a[k] * a[k];
    nb += b[k] * b[k];
  }
  const double denom = std::sqrt(na) * std::sqrt(nb);
  return denom > 0.0 ? 1.0 - dot / denom : 1.0;
}

/// Gallery indices per query in ascending distance; ties keep gallery order.
inline std::vector<std::vector<std::size_t>> rank_gallery(const RetrievalSet& rs) {
  rs.validate();
  std::vector<std::vector<std::size_t>> out(rs.query.size());
  std::vector<double> d(rs.gallery.size());
  for (std::size_t q = 0; q < rs.query.size(); ++q) {
    auto& order = out[q];
    for (std::size_t g = 0; g < rs.gallery.size(); ++g) {
      d[g] = distance(rs.query.features.row(q), rs.gallery.features.row(g), rs.distance);
      if (!(rs.exclude_self && g == q)) order.push_back(g);
    }
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return d[a] < d[b]; });
  }
  return out;
}

struct MetricsReport {
  std::vector<std::pair<int, double>> cmc;  // requested rank → rate
  std::vector<double> cmc_curve;            // rate at ranks 1..gallery size
  double map = 0.0;
  double minp = 0.0;
  double intra_mean = 0.0;
  double inter_mean = 0.0;
  double gap = 0.0;
};

inline MetricsReport cmc_map_minp(const RetrievalSet& rs, const std::vector<int>& ranks = {1, 5, 10,
                                                                                           20}) {
  const auto order = rank_gallery(rs);
  const std::size_t nq = rs.query.size();
  const std::size_t ng = order.empty() ? 0 : order[0].size();
  MetricsReport r;
  std::vector<double> first_hit(ng + 1, 0.0);
  for (std::size_t q = 0; q < nq; ++q) {
    const int label = rs.query.labels[q];
    std::size_t hits = 0, first = 0, last = 0;
    double ap = 0.0;
    for (std::size_t k = 0; k < order[q].size(); ++k) {
      if (rs.gallery.labels[order[q][k]] != label) continue;
      ++hits;
      if (hits == 1) first = k + 1;
      last = k + 1;
      ap += static_cast<double>(hits) / static_cast<double>(k + 1);
    }
    if (hits == 0) {
      throw InvalidSetup("query " + std::to_string(q) + " (identity " + std::to_string(label) +
                         ") has no match in the gallery");
    }
    first_hit[first] += 1.0;
    r.map += ap / static_cast<double>(hits);
    r.minp += static_cast<double>(hits) / static_cast<double>(last);
  }
  const auto count = static_cast<double>(nq);
  r.map /= count;
  r.minp /= count;
  r.cmc_curve.resize(ng);
  double acc = 0.0;
  for (std::size_t k = 1; k <= ng; ++k) {
    acc += first_hit[k];
    r.cmc_curve[k - 1] = acc / count;
  }
  for (int k : ranks) {
    if (k < 1) throw InvalidArgument("CMC ranks start at 1");
    const std::size_t idx = std::min<std::size_t>(static_cast<std::size_t>(k), ng);
    r.cmc.emplace_back(k, r.cmc_curve[idx - 1]);
  }
  return r;
}

struct DistanceGap {
  double intra_mean = 0.0;
  double inter_mean = 0.0;
  double gap = 0.0;
};

/// Mean Euclidean distance over same-label and different-label unordered pairs.
inline DistanceGap distance_gap(const FeatureBatch& emb) {
  emb.validate();
  const std::size_t n = emb.size();
  if (n < 2) throw InvalidSetup("distance gap needs at least two samples");
  std::vector<int> sorted = emb.labels;
  std::sort(sorted.begin(), sorted.end());
  if (sorted.front() == sorted.back()) throw InvalidSetup("distance gap needs two identities");
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    while (j < n && sorted[j] == sorted[i]) ++j;
    if (j - i < 2) {
      throw InvalidSetup("identity " + std::to_string(sorted[i]) + " has a single sample");
    }
    i = j;
  }
  double intra = 0.0, inter = 0.0;
  std::size_t n_intra = 0, n_inter = 0;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      const double d = distance(emb.features.row(i), emb.features.row(j), Distance::Euclidean);
      if (emb.labels[i] == emb.labels[j]) {
        intra += d;
        ++n_intra;
      } else {
        inter += d;
        ++n_inter;
      }
    }
  }
  DistanceGap g;
  g.intra_mean = intra / static_cast<double>(n_intra);
  g.inter_mean = inter / static_cast<double>(n_inter);
  g.gap = g.inter_mean - g.intra_mean;
  return g;
}

}  // namespace amkalign
