#pragma once

// Independent reference implementations used only by tests.

#include <algorithm>
#include <cstdint>
#include <limits>
#include <set>
#include <vector>

#include <Eigen/Core>

#include "macr/seeds.hpp"
#include <boost/multiprecision/cpp_int.hpp>
#include <cmath>

namespace oracle {

using Partition = std::set<std::set<int>>;

inline Partition partition_of(const std::vector<int>& labels) {
  std::vector<std::set<int>> groups;
  for (int i = 0; i < static_cast<int>(labels.size()); ++i) {
    const auto l = static_cast<std::size_t>(labels[static_cast<std::size_t>(i)]);
    if (groups.size() <= l) groups.resize(l + 1);
    groups[l].insert(i);
  }
  Partition p;
  for (auto& g : groups)
    if (!g.empty()) p.insert(g);
  return p;
}

inline double partition_inertia(const Eigen::MatrixXd& pts, const std::vector<int>& labels, int k) {
  double total = 0.0;
  for (int c = 0; c < k; ++c) {
    Eigen::RowVectorXd sum = Eigen::RowVectorXd::Zero(pts.cols());
    int count = 0;
    for (int i = 0; i < pts.rows(); ++i)
      if (labels[static_cast<std::size_t>(i)] == c) {
        sum += pts.row(i);
        ++count;
      }
    if (count == 0) return std::numeric_limits<double>::infinity();
    const Eigen::RowVectorXd mean = sum / count;
    for (int i = 0; i < pts.rows(); ++i)
      if (labels[static_cast<std::size_t>(i)] == c) total += (pts.row(i) - mean).squaredNorm();
  }
  return total;
}

struct BruteForce {
  Partition best;
  double inertia = std::numeric_limits<double>::infinity();
  double runner_up = std::numeric_limits<double>::infinity();  // best inertia of any other partition
};

// Exhaustive search over every labelling with k non-empty clusters.
inline BruteForce brute_force_kmeans(const Eigen::MatrixXd& pts, int k) {
  const int n = static_cast<int>(pts.rows());
  std::vector<int> labels(static_cast<std::size_t>(n), 0);
  BruteForce out;
  std::uint64_t total = 1;
  for (int i = 0; i < n; ++i) total *= static_cast<std::uint64_t>(k);
  for (std::uint64_t code = 0; code < total; ++code) {
    std::uint64_t c = code;
    for (int i = 0; i < n; ++i) {
      labels[static_cast<std::size_t>(i)] = static_cast<int>(c % static_cast<std::uint64_t>(k));
      c /= static_cast<std::uint64_t>(k);
    }
    // Visit each partition once: label 0 first, labels introduced in order.
    int next = 0;
    bool canonical = true;
    for (int l : labels) {
      if (l > next) {
        canonical = false;
        break;
      }
      if (l == next) ++next;
    }
    if (!canonical || next != k) continue;
    const double in = partition_inertia(pts, labels, k);
    if (in < out.inertia) {
      out.runner_up = out.inertia;
      out.inertia = in;
      out.best = partition_of(labels);
    } else if (in < out.runner_up) {
      out.runner_up = in;
    }
  }
  return out;
}

// Per-class precision/recall/F1 computed directly from counts, weighted by
// support, with zero-division treated as 0.
struct Metrics {
  double precision, recall, f1;
};

template <typename Counts>
Metrics weighted_reference(const Counts& cm) {
  const int l = static_cast<int>(cm.rows());
  long double total = 0;
  for (int i = 0; i < l; ++i)
    for (int j = 0; j < l; ++j) total += static_cast<long double>(cm(i, j));
  long double p = 0, r = 0, f = 0;
  for (int c = 0; c < l; ++c) {
    long double tp = static_cast<long double>(cm(c, c)), pred = 0, gold = 0;
    for (int i = 0; i < l; ++i) {
      pred += static_cast<long double>(cm(i, c));
      gold += static_cast<long double>(cm(c, i));
    }
    const long double pc = pred > 0 ? tp / pred : 0;
    const long double rc = gold > 0 ? tp / gold : 0;
    const long double fc = (pc + rc) > 0 ? 2 * pc * rc / (pc + rc) : 0;
    const long double w = total > 0 ? gold / total : 0;
    p += w * pc;
    r += w * rc;
    f += w * fc;
  }
  return {static_cast<double>(p), static_cast<double>(r), static_cast<double>(f)};
}

struct PlanarFixture {
  Eigen::MatrixXd points;  // 8 x 2
  int k;
};

// The suite's 8-point planar clustering fixtures: blob layouts with jitter
// and a set of uniformly scattered points.
inline std::vector<PlanarFixture> planar_fixtures() {
  std::vector<PlanarFixture> out;
  macr::Rng rng(77);
  for (int f = 0; f < 20; ++f) {
    const int k = 2 + f % 3;
    Eigen::MatrixXd pts(8, 2);
    for (int i = 0; i < 8; ++i) {
      const int blob = i % k;
      pts(i, 0) = 10.0 * blob + rng.uniform01();
      pts(i, 1) = 5.0 * (blob % 2) + rng.uniform01();
    }
    out.push_back({pts, k});
  }
  for (int f = 0; f < 20; ++f) {
    Eigen::MatrixXd pts(8, 2);
    for (int i = 0; i < 8; ++i) {
      pts(i, 0) = 10.0 * rng.uniform01();
      pts(i, 1) = 10.0 * rng.uniform01();
    }
    out.push_back({pts, 2 + f % 3});
  }
  return out;
}

// Exact rational mixture sum_i (sizes[i] / n) * (counts[i][y] / T_i).
using Rational = boost::multiprecision::cpp_rational;

inline std::vector<Rational> exact_mixture(const std::vector<int>& sizes,
                                           const std::vector<std::vector<std::int64_t>>& counts) {
  const std::size_t labels = counts.front().size();
  std::int64_t n = 0;
  for (int s : sizes) n += s;
  std::vector<Rational> out(labels, Rational(0));
  for (std::size_t i = 0; i < sizes.size(); ++i) {
    std::int64_t t = 0;
    for (auto c : counts[i]) t += c;
    for (std::size_t y = 0; y < labels; ++y) out[y] += Rational(sizes[i], n) * Rational(counts[i][y], t);
  }
  return out;
}

// True when no other double is strictly closer to the exact value.
inline bool is_nearest_double(double v, const Rational& exact) {
  if (!std::isfinite(v)) return false;
  const Rational here = abs(Rational(v) - exact);
  for (double other : {std::nextafter(v, -INFINITY), std::nextafter(v, INFINITY)})
    if (abs(Rational(other) - exact) < here) return false;
  return true;
}

}  // namespace oracle
