#include "macr/mediator.hpp"

#include <set>

namespace macr {

RowMatrix<double> stack_embeddings(const std::vector<Inference>& inferences, bool normalize) {
  if (inferences.empty()) throw ValidationError("no inferences to cluster");
  RowMatrix<double> rows;
  for (std::size_t i = 0; i < inferences.size(); ++i) {
    const auto& inf = inferences[i];
    if (!inf.embedding)
      throw ValidationError("inference " + std::to_string(i) + " (generation " +
                            std::to_string(inf.generation_index()) + ") has no embedding");
    if (i == 0) rows.resize(static_cast<Eigen::Index>(inferences.size()), inf.embedding->size());
    if (inf.embedding->size() != rows.cols())
      throw ValidationError("inference " + std::to_string(i) + " has embedding dimension " +
                            std::to_string(inf.embedding->size()) + ", expected " + std::to_string(rows.cols()));
    rows.row(static_cast<Eigen::Index>(i)) = inf.embedding->transpose();
    if (normalize) {
      const double norm = rows.row(static_cast<Eigen::Index>(i)).norm();
      if (norm > 0.0) rows.row(static_cast<Eigen::Index>(i)) /= norm;
    }
  }
  return rows;
}

MediatorSet select_representatives(const std::vector<Inference>& inferences,
                                   const ClusterAssignment<double>& assignment, std::string tree_id) {
  if (assignment.assignments.size() != inferences.size())
    throw ValidationError("assignment covers " + std::to_string(assignment.assignments.size()) +
                          " points but " + std::to_string(inferences.size()) + " inferences were given");
  const int k = assignment.k();
  const auto n = static_cast<int>(inferences.size());

  std::vector<int> best(static_cast<std::size_t>(k), -1);
  std::vector<double> best_dist(static_cast<std::size_t>(k), 0.0);
  std::vector<int> sizes(static_cast<std::size_t>(k), 0);
  for (int i = 0; i < n; ++i) {
    const auto& inf = inferences[static_cast<std::size_t>(i)];
    if (!inf.embedding)
      throw ValidationError("inference with generation index " + std::to_string(inf.generation_index()) +
                            " has no embedding");
    const int c = assignment.assignments[static_cast<std::size_t>(i)];
    if (c < 0 || c >= k) throw ValidationError("cluster index out of range");
    ++sizes[static_cast<std::size_t>(c)];
    const double d = (inf.embedding->transpose() - assignment.centroids.row(c)).squaredNorm();
    int& b = best[static_cast<std::size_t>(c)];
    double& bd = best_dist[static_cast<std::size_t>(c)];
    if (b < 0 || d < bd ||
        (d == bd && inf.generation_index() < inferences[static_cast<std::size_t>(b)].generation_index())) {
      b = i;
      bd = d;
    }
  }

  MediatorSet out;
  out.tree_id = std::move(tree_id);
  out.n = n;
  out.cluster_sizes = sizes;
  out.seed = assignment.seed;
  out.requested_k = k;
  out.inertia = assignment.inertia;
  out.iterations_run = assignment.iterations_run;
  out.assignments = assignment.assignments;
  for (int c = 0; c < k; ++c) {
    if (best[static_cast<std::size_t>(c)] < 0) throw ValidationError("cluster " + std::to_string(c) + " is empty");
    out.representatives.push_back(inferences[static_cast<std::size_t>(best[static_cast<std::size_t>(c)])]);
    out.probabilities.push_back(static_cast<double>(sizes[static_cast<std::size_t>(c)]) / static_cast<double>(n));
  }
  return out;
}

int distinct_rows(const RowMatrix<double>& rows) {
  std::set<std::vector<double>> seen;
  for (Eigen::Index i = 0; i < rows.rows(); ++i) {
    std::vector<double> r(rows.cols());
    for (Eigen::Index j = 0; j < rows.cols(); ++j) r[static_cast<std::size_t>(j)] = rows(i, j);
    seen.insert(std::move(r));
  }
  return static_cast<int>(seen.size());
}

MediatorSet build_mediators(const std::vector<Inference>& inferences, const MediatorConfig& cfg,
                            const std::string& tree_id) {
  const RowMatrix<double> rows = stack_embeddings(inferences, cfg.normalize_embeddings);
  const int effective_k = std::min(cfg.k, distinct_rows(rows));
  KMeansOptions opt;
  opt.max_iters = cfg.max_iters;
  opt.tol = cfg.tol;
  opt.restarts = cfg.restarts;
  const auto assignment = kmeans(rows, effective_k, cfg.seed, opt);
  if (!cfg.normalize_embeddings) {
    MediatorSet set = select_representatives(inferences, assignment, tree_id);
    set.requested_k = cfg.k;
    return set;
  }
  // Distances must be measured in the space that was clustered.
  std::vector<Inference> normalized = inferences;
  for (std::size_t i = 0; i < normalized.size(); ++i)
    normalized[i].embedding = rows.row(static_cast<Eigen::Index>(i)).transpose();
  MediatorSet set = select_representatives(normalized, assignment, tree_id);
  set.requested_k = cfg.k;
  return set;
}

}  // namespace macr
