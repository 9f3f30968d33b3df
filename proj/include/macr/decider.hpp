#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "macr/backend.hpp"
#include "macr/config.hpp"
#include "macr/mediator.hpp"
#include "macr/reasoner.hpp"
#include "macr/treemodel.hpp"

namespace macr {

// Probability vector over the ordered risk levels. Vote frequencies and
// mixtures of them also carry the exact form numerators[y] / denominator.
struct RiskDistribution {
  std::vector<double> probs;
  std::vector<std::int64_t> numerators;
  std::int64_t denominator = 0;

  bool exact() const { return denominator > 0; }
  std::size_t size() const { return probs.size(); }

  static RiskDistribution from_counts(const std::vector<std::int64_t>& counts);
  static RiskDistribution from_probs(std::vector<double> probs);
};

// probs[y] = (1/T) * #{t : votes[t] == y}.
RiskDistribution vote_distribution(const std::vector<std::size_t>& votes, std::size_t label_count);

// sum_i (|C_i| / n) * vote_dists[i]. Exact inputs give the correctly rounded
// result; otherwise float error up to 1e-9 is renormalised away.
RiskDistribution frontdoor_mixture(const MediatorSet& mediators, const std::vector<RiskDistribution>& vote_dists);

// Index of the largest probability; ties go to the higher risk level.
std::size_t argmax_higher_risk(const RiskDistribution& dist);

struct Demonstration {
  std::string tree_id;
  std::size_t label = 0;
  std::string rendering;
  double similarity = 0.0;
};

struct DemonstrationSet {
  std::vector<Demonstration> items;  // one per risk level, in level order

  std::vector<std::string> source_ids() const;
};

class CoverageError : public PipelineError {
 public:
  CoverageError(std::size_t level, const std::string& level_name);
  std::size_t level() const { return level_; }

 private:
  std::size_t level_;
};

// Labelled pool trees with embeddings of their rendered text.
class DemonstrationPool {
 public:
  DemonstrationPool(const Dataset& pool, Backend& backend, const RenderLimits& limits);
  DemonstrationPool(const Dataset& pool, std::vector<Embedding> embeddings, const RenderLimits& limits);

  // Per level, the pool tree of that gold label most cosine-similar to the
  // query; ties to the lexicographically smallest id. The query tree itself is
  // never chosen.
  DemonstrationSet retrieve(const ConversationTree& query, const Embedding& query_embedding) const;

  const Dataset& dataset() const { return pool_; }
  const std::vector<Embedding>& embeddings() const { return embeddings_; }

 private:
  Dataset pool_;  // labelled trees only
  std::vector<Embedding> embeddings_;
  RenderLimits limits_;
};

// Strict match of the whole answer, else the single label name mentioned in
// the text (whole word, case-insensitive). nullopt when zero or several match.
std::optional<std::size_t> parse_label(std::string_view completion, const RiskLabelSet& labels);

class LabelParseError : public PipelineError {
 public:
  explicit LabelParseError(std::vector<std::string> raw);
  const std::vector<std::string>& raw() const { return raw_; }

 private:
  std::vector<std::string> raw_;
};

struct VoteRecord {
  int mediator_index = 0;  // -1 when there is no mediator (no_reasoner)
  std::vector<std::size_t> votes;
  std::vector<std::string> per_call_raw;
};

struct DecisionResult {
  std::size_t label = 0;
  std::string raw;  // completion that was parsed
  int attempts = 1;
};

class Decider {
 public:
  Decider(Backend& backend, PromptSet prompts, DeciderConfig cfg, RiskLabelSet labels);

  // rep == nullptr builds the thread-only prompt.
  DecisionResult decide_once(const Inference* rep, const ConversationTree& tree, const DemonstrationSet& demos,
                             int t_index, int mediator_index = 0) const;

  // T independent decisions aggregated into a frequency vector.
  RiskDistribution vote(const Inference* rep, const ConversationTree& tree, const DemonstrationSet& demos, int t,
                        int mediator_index = 0, VoteRecord* record = nullptr) const;

  // Label from the inference alone, no thread and no demonstrations.
  DecisionResult direct_label(const Inference& rep, const std::string& tree_id, int mediator_index) const;

  ChatRequest decision_request(const Inference* rep, const ConversationTree& tree, const DemonstrationSet& demos,
                               const std::string& nonce) const;
  ChatRequest direct_request(const Inference& rep, const std::string& nonce) const;
  std::string nonce(const std::string& tree_id, int mediator_index, int t_index) const;

  const RiskLabelSet& labels() const { return labels_; }
  const DeciderConfig& config() const { return cfg_; }

 private:
  DecisionResult ask(ChatRequest req) const;

  Backend& backend_;
  PromptSet prompts_;
  DeciderConfig cfg_;
  RiskLabelSet labels_;
};

struct Provenance {
  Ablation ablation = Ablation::Full;
  int n = 0;
  int requested_k = 0;
  int effective_k = 0;
  int t = 0;
  std::uint64_t kmeans_seed = 0;
  double inertia = 0.0;
  std::vector<int> cluster_sizes;
  std::vector<double> mediator_probabilities;
  std::vector<int> representative_generations;
  std::vector<DebateTranscript> transcripts;
  std::vector<std::string> skipped_generations;
  std::vector<VoteRecord> votes;
  std::vector<std::string> demo_ids;
  int demo_retrievals = 0;
};

struct Prediction {
  std::string tree_id;
  std::size_t label = 0;
  RiskDistribution distribution;
  Provenance provenance;
};

// Wraps any failure with the stage and tree it happened in.
class StageError : public PipelineError {
 public:
  StageError(std::string stage, std::string tree_id, const std::string& cause);
  const std::string& stage() const { return stage_; }
  const std::string& tree_id() const { return tree_id_; }

 private:
  std::string stage_;
  std::string tree_id_;
};

// End to end: inferences, mediators, demonstrations, votes, mixture, argmax.
class Pipeline {
 public:
  Pipeline(const PipelineConfig& cfg, Backend& backend);

  Prediction predict(const ConversationTree& tree, const DemonstrationPool& pool) const;
  DemonstrationPool make_pool(const Dataset& pool) const;

  const PipelineConfig& config() const { return cfg_; }

 private:
  PipelineConfig cfg_;
  Backend& backend_;
  Reasoner reasoner_;
  Decider decider_;
};

// One line of the predictions file: {tree_id, label, probs, provenance}.
std::string serialize_prediction(const Prediction& p, const RiskLabelSet& labels);

}  // namespace macr
