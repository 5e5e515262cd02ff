#pragma once

#include <string>
#include <vector>

#include "amkalign/matrix.hpp"

namespace amkalign {

enum class Modality { RGB, IR };
enum class Branch { Global, Part, Fused };

inline const char* to_string(Modality m) { return m == Modality::RGB ? "rgb" : "ir"; }

/// Embedding rows with one identity label per row.
struct FeatureBatch {
  Matrix features;
  std::vector<int> labels;
  Modality modality = Modality::RGB;
  Branch branch = Branch::Global;

  FeatureBatch() = default;
  FeatureBatch(Matrix f, std::vector<int> l, Modality m = Modality::RGB, Branch b = Branch::Global)
      : features(std::move(f)), labels(std::move(l)), modality(m), branch(b) {
    validate();
  }

  std::size_t size() const noexcept { return features.rows(); }
  std::size_t dim() const noexcept { return features.cols(); }

  void validate() const {
    if (labels.size() != features.rows()) {
      throw ShapeError("feature batch has " + std::to_string(features.rows()) + " rows but " +
                       std::to_string(labels.size()) + " labels");
    }
    if (labels.empty()) throw ShapeError("feature batch must have at least one row");
    for (int l : labels) {
      if (l < 0) throw InvalidArgument("identity labels must be nonnegative");
    }
  }
};

/// Row-wise concatenation a ⊕ b: row i of the result is [a_i | b_i].
inline FeatureBatch concat_rows_dimwise(const FeatureBatch& a, const FeatureBatch& b) {
  if (a.size() != b.size()) {
    throw ShapeError("concat: row counts differ (" + std::to_string(a.size()) + " vs " +
                     std::to_string(b.size()) + ")");
  }
  if (a.labels != b.labels) throw ShapeError("concat: labels disagree row-for-row");
  return FeatureBatch(hstack(a.features, b.features), a.labels, a.modality, Branch::Fused);
}

}  // namespace amkalign
