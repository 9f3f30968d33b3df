#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "macr/backend.hpp"
#include "macr/config.hpp"
#include "macr/embedding.hpp"
#include "macr/prompts.hpp"
#include "macr/treemodel.hpp"

namespace macr {

enum class EvidenceLevel { Low, Medium, High, Unspecified };

std::string_view to_string(EvidenceLevel level);
EvidenceLevel parse_evidence_level_name(std::string_view name);

// Evidence level stated in a synthesis ("Evidence level: High"). Falls back to
// a bare capitalised Low/Medium/High word, else Unspecified. Last mention wins.
EvidenceLevel extract_evidence_level(std::string_view synthesis);

struct DebateTranscript {
  std::string tree_id;
  int generation_index = 0;
  int rounds_completed = 0;  // 3 for a full debate, 1 when truncated to the analyst
  std::string analyst_output;
  std::string critic_output;
  std::string empiricist_output;
  std::string synthesis;

  bool operator==(const DebateTranscript&) const = default;
};

// One counterfactual psychological inference about the original poster.
struct Inference {
  std::string text;
  std::optional<Embedding> embedding;
  EvidenceLevel evidence_level = EvidenceLevel::Unspecified;
  DebateTranscript transcript;

  int generation_index() const { return transcript.generation_index; }
};

class DebateError : public PipelineError {
 public:
  DebateError(int round, std::string role, int generation_index, const std::string& cause);
  int round() const { return round_; }
  const std::string& role() const { return role_; }
  int generation_index() const { return generation_index_; }

 private:
  int round_;
  std::string role_;
  int generation_index_;
};

struct GenerationOutcome {
  std::vector<Inference> inferences;     // ordered by generation index
  std::vector<std::string> skipped;      // error messages under SkipAndRecord
};

// Four-role debate: analyst, then critic and empiricist in parallel over the
// analyst's output, then a synthesizer over all three.
class Reasoner {
 public:
  Reasoner(Backend& backend, PromptSet prompts, ReasonerConfig cfg);

  Inference run_debate(const ConversationTree& tree, int generation_index) const;

  // n independent debates, each embedded. Fail-fast rethrows the error of the
  // lowest failing generation.
  GenerationOutcome generate_inferences(const ConversationTree& tree, int n) const;

  std::string nonce(const std::string& tree_id, int generation_index) const;

  // Filled prompts for one generation, exposed for inspection.
  ChatRequest analyst_request(const std::string& rendered_tree, const std::string& nonce) const;
  ChatRequest critic_request(const std::string& rendered_tree, const std::string& analyst,
                             const std::string& nonce) const;
  ChatRequest empiricist_request(const std::string& rendered_tree, const std::string& analyst,
                                 const std::string& nonce) const;
  ChatRequest synthesizer_request(const std::string& rendered_tree, const std::string& analyst,
                                  const std::string& critic, const std::string& empiricist,
                                  const std::string& nonce) const;

  const ReasonerConfig& config() const { return cfg_; }

 private:
  ChatRequest make_request(std::string_view role, const std::map<std::string, std::string>& values,
                           double temperature, const std::string& nonce) const;

  Backend& backend_;
  PromptSet prompts_;
  ReasonerConfig cfg_;
};

}  // namespace macr
