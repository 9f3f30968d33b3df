#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "macr/config.hpp"
#include "macr/kmeans.hpp"
#include "macr/reasoner.hpp"

namespace macr {

// K representative inferences with cluster-size probabilities |C_i| / n.
struct MediatorSet {
  std::string tree_id;
  std::vector<Inference> representatives;  // representative i belongs to cluster i
  std::vector<int> cluster_sizes;
  int n = 0;
  std::vector<double> probabilities;

  // Clustering provenance.
  std::uint64_t seed = 0;
  int requested_k = 0;
  double inertia = 0.0;
  int iterations_run = 0;
  std::vector<int> assignments;

  int k() const { return static_cast<int>(cluster_sizes.size()); }
};

// Rows of the returned matrix are the inference embeddings, in order.
// Throws when an inference has no embedding.
RowMatrix<double> stack_embeddings(const std::vector<Inference>& inferences, bool normalize = false);

// Per cluster, the member nearest the centroid (Euclidean), ties to the lowest
// generation index. probabilities[i] = cluster_sizes[i] / n.
MediatorSet select_representatives(const std::vector<Inference>& inferences,
                                   const ClusterAssignment<double>& assignment, std::string tree_id = {});

// Number of distinct embeddings; bounds the usable K.
int distinct_rows(const RowMatrix<double>& rows);

// Clusters with K' = min(K, distinct embeddings) and selects representatives.
MediatorSet build_mediators(const std::vector<Inference>& inferences, const MediatorConfig& cfg,
                            const std::string& tree_id);

}  // namespace macr
