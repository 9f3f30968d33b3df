#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "macr/backend.hpp"
#include "macr/prompts.hpp"
#include "macr/treemodel.hpp"

namespace macr {

// Pipeline variants. Full runs everything; the others each remove one part.
enum class Ablation {
  Full,
  NoReasoner,   // decision over the thread alone, no inferences
  NoDecider,    // direct label per representative, no demonstrations
  AnalystOnly,  // debate stops after the first round
};

std::string_view to_string(Ablation a);
Ablation parse_ablation(std::string_view name);

enum class FailurePolicy { FailFast, SkipAndRecord };

struct ReasonerConfig {
  int n = 10;
  FailurePolicy failure_policy = FailurePolicy::FailFast;
  bool synthesizer_sees_tree = true;
  bool analyst_only = false;
  RenderLimits limits;
  double generation_temperature = 0.9;
  double synthesizer_temperature = 0.2;
  int max_output_tokens = 1024;
  std::uint64_t nonce_seed = 0;
};

struct MediatorConfig {
  int k = 3;
  std::uint64_t seed = 0;
  int max_iters = 300;
  double tol = 1e-9;
  int restarts = 10;
  bool normalize_embeddings = false;
};

struct DeciderConfig {
  int t = 3;
  double temperature = 0.2;
  int max_output_tokens = 256;
  RenderLimits limits;
  std::uint64_t nonce_seed = 0;
};

struct PipelineConfig {
  RiskLabelSet labels = RiskLabelSet::generic();
  std::uint64_t master_seed = 42;
  std::uint64_t fold_seed = 0;
  Ablation ablation = Ablation::Full;
  bool stub = true;
  ReasonerConfig reasoner;
  MediatorConfig mediator;
  DeciderConfig decider;
  BackendConfig backend;
  PromptSet prompts = PromptSet::builtin();
  std::map<std::string, std::filesystem::path> template_paths;

  // Defaults with stub routing and seeds derived from master_seed.
  static PipelineConfig defaults();

  // Re-derives fold, clustering and nonce seeds from a new master seed.
  void set_master_seed(std::uint64_t seed);

  // Throws ValidationError naming the offending field. Returns warnings.
  std::vector<std::string> validate() const;
};

// Plain-text "key = value" config, '#' starts a comment. Unknown keys are
// rejected. Template paths are resolved relative to the config file.
PipelineConfig parse_config(std::istream& in, const std::filesystem::path& base_dir = {});
PipelineConfig load_config(const std::filesystem::path& path);

// Human readable resolved plan, one "key=value" per line.
std::string describe_plan(const PipelineConfig& cfg);

}  // namespace macr
