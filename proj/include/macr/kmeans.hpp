#pragma once

#include <algorithm>
#include <cstdint>
#include <limits>
#include <numeric>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "macr/error.hpp"
#include "macr/seeds.hpp"

namespace macr {

template <typename Scalar>
using RowMatrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

template <typename Scalar>
struct ClusterAssignment {
  std::vector<int> assignments;   // cluster of each input row
  RowMatrix<Scalar> centroids;    // one row per cluster, the mean of its members
  Scalar inertia = Scalar(0);     // sum of squared distances to assigned centroid
  int iterations_run = 0;
  std::uint64_t seed = 0;
  std::vector<Scalar> inertia_trace;  // per Lloyd iteration, when requested

  int k() const { return static_cast<int>(centroids.rows()); }
  std::vector<int> cluster_sizes() const {
    std::vector<int> sizes(static_cast<std::size_t>(k()), 0);
    for (int a : assignments) ++sizes[static_cast<std::size_t>(a)];
    return sizes;
  }
};

struct KMeansOptions {
  int max_iters = 300;
  double tol = 1e-9;  // stop when no centroid moves further than this
  int restarts = 10;  // independent k-means++ starts, lowest inertia kept
  bool record_trace = false;
};

class TooFewPointsError : public ValidationError {
 public:
  TooFewPointsError(long points, int k)
      : ValidationError("kmeans: " + std::to_string(points) + " point(s) cannot form K=" +
                        std::to_string(k) + " clusters; lower K") {}
};

namespace detail {

template <typename Scalar>
struct LloydRun {
  std::vector<int> labels;
  RowMatrix<Scalar> centroids;
  Scalar inertia;
  int iterations;
  std::vector<Scalar> trace;
};

template <typename Scalar>
void assign_nearest(const RowMatrix<Scalar>& x, const RowMatrix<Scalar>& c, std::vector<int>& labels,
                    std::vector<Scalar>& dist) {
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    Scalar best = std::numeric_limits<Scalar>::infinity();
    int arg = 0;
    for (Eigen::Index j = 0; j < c.rows(); ++j) {
      const Scalar d = (x.row(i) - c.row(j)).squaredNorm();
      if (d < best) {
        best = d;
        arg = static_cast<int>(j);
      }
    }
    labels[static_cast<std::size_t>(i)] = arg;
    dist[static_cast<std::size_t>(i)] = best;
  }
}

// Empty clusters take the point farthest from its centroid, drawn from a
// cluster that can spare it. Ties go to the lowest row.
template <typename Scalar>
void repair_empty(const RowMatrix<Scalar>& x, RowMatrix<Scalar>& c, std::vector<int>& labels,
                  std::vector<Scalar>& dist) {
  const auto k = static_cast<std::size_t>(c.rows());
  std::vector<int> sizes(k, 0);
  for (int l : labels) ++sizes[static_cast<std::size_t>(l)];
  for (std::size_t e = 0; e < k; ++e) {
    if (sizes[e] > 0) continue;
    std::size_t far = labels.size();
    for (std::size_t i = 0; i < labels.size(); ++i) {
      if (sizes[static_cast<std::size_t>(labels[i])] < 2) continue;
      if (far == labels.size() || dist[i] > dist[far]) far = i;
    }
    --sizes[static_cast<std::size_t>(labels[far])];
    labels[far] = static_cast<int>(e);
    sizes[e] = 1;
    dist[far] = Scalar(0);
    c.row(static_cast<Eigen::Index>(e)) = x.row(static_cast<Eigen::Index>(far));
  }
}

template <typename Scalar>
RowMatrix<Scalar> cluster_means(const RowMatrix<Scalar>& x, const std::vector<int>& labels, Eigen::Index k) {
  RowMatrix<Scalar> c = RowMatrix<Scalar>::Zero(k, x.cols());
  std::vector<int> sizes(static_cast<std::size_t>(k), 0);
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    c.row(labels[static_cast<std::size_t>(i)]) += x.row(i);
    ++sizes[static_cast<std::size_t>(labels[static_cast<std::size_t>(i)])];
  }
  for (Eigen::Index j = 0; j < k; ++j) c.row(j) /= static_cast<Scalar>(sizes[static_cast<std::size_t>(j)]);
  return c;
}

template <typename Scalar>
Scalar inertia_of(const RowMatrix<Scalar>& x, const RowMatrix<Scalar>& c, const std::vector<int>& labels) {
  Scalar s(0);
  for (Eigen::Index i = 0; i < x.rows(); ++i) s += (x.row(i) - c.row(labels[static_cast<std::size_t>(i)])).squaredNorm();
  return s;
}

template <typename Scalar>
RowMatrix<Scalar> kmeanspp_init(const RowMatrix<Scalar>& x, int k, Rng& rng) {
  const auto n = static_cast<std::size_t>(x.rows());
  RowMatrix<Scalar> c(k, x.cols());
  std::vector<bool> chosen(n, false);
  std::size_t first = rng.below(n);
  chosen[first] = true;
  c.row(0) = x.row(static_cast<Eigen::Index>(first));
  std::vector<Scalar> d2(n);
  for (std::size_t i = 0; i < n; ++i) d2[i] = (x.row(static_cast<Eigen::Index>(i)) - c.row(0)).squaredNorm();
  for (int j = 1; j < k; ++j) {
    const Scalar total = std::accumulate(d2.begin(), d2.end(), Scalar(0));
    std::size_t pick = n;
    if (total > Scalar(0)) {
      const Scalar target = static_cast<Scalar>(rng.uniform01()) * total;
      Scalar cum(0);
      for (std::size_t i = 0; i < n; ++i) {
        if (d2[i] <= Scalar(0)) continue;
        cum += d2[i];
        pick = i;
        if (cum > target) break;
      }
    } else {
      for (std::size_t i = 0; i < n && pick == n; ++i)
        if (!chosen[i]) pick = i;
    }
    chosen[pick] = true;
    c.row(j) = x.row(static_cast<Eigen::Index>(pick));
    for (std::size_t i = 0; i < n; ++i)
      d2[i] = std::min(d2[i], (x.row(static_cast<Eigen::Index>(i)) - c.row(j)).squaredNorm());
  }
  return c;
}

template <typename Scalar>
LloydRun<Scalar> lloyd(const RowMatrix<Scalar>& x, int k, std::uint64_t seed, const KMeansOptions& opt) {
  Rng rng(seed);
  const auto n = static_cast<std::size_t>(x.rows());
  LloydRun<Scalar> run;
  run.centroids = kmeanspp_init(x, k, rng);
  run.labels.assign(n, 0);
  std::vector<Scalar> dist(n);
  run.iterations = 0;
  while (run.iterations < opt.max_iters) {
    ++run.iterations;
    assign_nearest(x, run.centroids, run.labels, dist);
    repair_empty(x, run.centroids, run.labels, dist);
    RowMatrix<Scalar> next = cluster_means(x, run.labels, k);
    const Scalar shift = (next - run.centroids).rowwise().norm().maxCoeff();
    run.centroids = std::move(next);
    if (opt.record_trace) run.trace.push_back(inertia_of(x, run.centroids, run.labels));
    if (shift <= static_cast<Scalar>(opt.tol)) break;
  }
  // Final assignment against the final centroids keeps labels and means consistent.
  assign_nearest(x, run.centroids, run.labels, dist);
  repair_empty(x, run.centroids, run.labels, dist);
  run.centroids = cluster_means(x, run.labels, k);
  run.inertia = inertia_of(x, run.centroids, run.labels);
  return run;
}

}  // namespace detail

// Lloyd's algorithm from k-means++ seeding over the rows of `points`.
//
// Rows are processed in lexicographic order, so the partition does not depend
// on input order. Clusters are numbered by their smallest input row.
template <typename Derived>
ClusterAssignment<typename Derived::Scalar> kmeans(const Eigen::MatrixBase<Derived>& points, int k,
                                                   std::uint64_t seed, const KMeansOptions& opt = {}) {
  using Scalar = typename Derived::Scalar;
  const Eigen::Index n = points.rows();
  if (k < 1) throw ValidationError("kmeans: K must be >= 1");
  if (n < k) throw TooFewPointsError(static_cast<long>(n), k);
  if (opt.max_iters < 1 || opt.restarts < 1) throw ValidationError("kmeans: max_iters and restarts must be >= 1");
  if (!points.allFinite()) throw ValidationError("kmeans: non-finite coordinates");

  std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), Eigen::Index(0));
  std::stable_sort(order.begin(), order.end(), [&](Eigen::Index a, Eigen::Index b) {
    for (Eigen::Index d = 0; d < points.cols(); ++d) {
      if (points(a, d) < points(b, d)) return true;
      if (points(b, d) < points(a, d)) return false;
    }
    return false;
  });
  RowMatrix<Scalar> x(n, points.cols());
  for (Eigen::Index i = 0; i < n; ++i) x.row(i) = points.row(order[static_cast<std::size_t>(i)]);

  detail::LloydRun<Scalar> best;
  bool have = false;
  for (int r = 0; r < opt.restarts; ++r) {
    auto run = detail::lloyd<Scalar>(x, k, splitmix64(seed + static_cast<std::uint64_t>(r)), opt);
    if (!have || run.inertia < best.inertia) {
      best = std::move(run);
      have = true;
    }
  }

  // Back to input order, clusters renumbered by first appearance.
  std::vector<int> labels(static_cast<std::size_t>(n));
  for (Eigen::Index i = 0; i < n; ++i)
    labels[static_cast<std::size_t>(order[static_cast<std::size_t>(i)])] = best.labels[static_cast<std::size_t>(i)];
  std::vector<int> renumber(static_cast<std::size_t>(k), -1);
  int next = 0;
  for (int& l : labels) {
    if (renumber[static_cast<std::size_t>(l)] < 0) renumber[static_cast<std::size_t>(l)] = next++;
    l = renumber[static_cast<std::size_t>(l)];
  }

  ClusterAssignment<Scalar> out;
  out.assignments = std::move(labels);
  out.centroids.resize(k, points.cols());
  for (int j = 0; j < k; ++j) out.centroids.row(renumber[static_cast<std::size_t>(j)]) = best.centroids.row(j);
  out.inertia = best.inertia;
  out.iterations_run = best.iterations;
  out.seed = seed;
  out.inertia_trace = std::move(best.trace);
  return out;
}

}  // namespace macr
