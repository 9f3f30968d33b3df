#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <string_view>

#include <Eigen/Core>

#include "macr/error.hpp"

namespace macr {

using Embedding = Eigen::VectorXd;

template <typename Scalar>
using EmbeddingT = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

// Cosine of the angle between two equal-length vectors, clamped to [-1, 1].
template <typename DerivedA, typename DerivedB>
typename DerivedA::Scalar cosine_similarity(const Eigen::MatrixBase<DerivedA>& a,
                                            const Eigen::MatrixBase<DerivedB>& b) {
  using Scalar = typename DerivedA::Scalar;
  if (a.size() != b.size())
    throw ValidationError("cosine_similarity: dimension mismatch " + std::to_string(a.size()) +
                          " vs " + std::to_string(b.size()));
  const Scalar na = a.norm();
  const Scalar nb = b.norm();
  if (!(na > Scalar(0)) || !(nb > Scalar(0)))
    throw ValidationError("cosine_similarity: zero-norm input");
  const Scalar c = a.dot(b.template cast<Scalar>()) / (na * nb);
  return std::clamp(c, Scalar(-1), Scalar(1));
}

// Pseudorandom unit vector seeded by the SHA-256 of text. Coordinates are
// uniform in [-1, 1) before normalisation, so the result is bit-identical
// on every IEEE-754 platform.
Embedding hash_unit_vector(std::string_view text, int dim);

bool all_finite(const Embedding& v);

}  // namespace macr
