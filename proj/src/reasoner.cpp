#include "macr/reasoner.hpp"

#include <cstdio>
#include <regex>

#include "macr/parallel.hpp"
#include "macr/seeds.hpp"

namespace macr {

std::string_view to_string(EvidenceLevel level) {
  switch (level) {
    case EvidenceLevel::Low: return "Low";
    case EvidenceLevel::Medium: return "Medium";
    case EvidenceLevel::High: return "High";
    case EvidenceLevel::Unspecified: return "Unspecified";
  }
  return "Unspecified";
}

EvidenceLevel parse_evidence_level_name(std::string_view name) {
  std::string lower(name);
  for (auto& c : lower) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  if (lower == "low") return EvidenceLevel::Low;
  if (lower == "medium") return EvidenceLevel::Medium;
  if (lower == "high") return EvidenceLevel::High;
  return EvidenceLevel::Unspecified;
}

EvidenceLevel extract_evidence_level(std::string_view synthesis) {
  static const std::regex labelled(R"(evidence\s*(?:level|strength)?\s*[:=\-]?\s*\**\s*(low|medium|high)\b)",
                                   std::regex::icase);
  static const std::regex bare(R"(\b(Low|Medium|High)\b)");
  const std::string text(synthesis);
  for (const auto* re : {&labelled, &bare}) {
    std::string last;
    for (auto it = std::sregex_iterator(text.begin(), text.end(), *re); it != std::sregex_iterator(); ++it)
      last = (*it)[1].str();
    if (!last.empty()) return parse_evidence_level_name(last);
  }
  return EvidenceLevel::Unspecified;
}

DebateError::DebateError(int round, std::string role, int generation_index, const std::string& cause)
    : PipelineError("debate generation " + std::to_string(generation_index) + " failed in round " +
                    std::to_string(round) + " (" + role + "): " + cause),
      round_(round),
      role_(std::move(role)),
      generation_index_(generation_index) {}

Reasoner::Reasoner(Backend& backend, PromptSet prompts, ReasonerConfig cfg)
    : backend_(backend), prompts_(std::move(prompts)), cfg_(cfg) {
  prompts_.validate(cfg_.synthesizer_sees_tree);
}

std::string Reasoner::nonce(const std::string& tree_id, int generation_index) const {
  const auto v = derive_seed(cfg_.nonce_seed, tree_id + "#" + std::to_string(generation_index));
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

ChatRequest Reasoner::make_request(std::string_view role, const std::map<std::string, std::string>& values,
                                   double temperature, const std::string& nonce) const {
  const auto& tmpl = prompts_.at(role);
  ChatRequest req;
  req.role_name = std::string(role);
  req.system_prompt = fill_placeholders(tmpl.system, values);
  req.user_prompt = fill_placeholders(tmpl.user, values);
  req.temperature = temperature;
  req.max_output_tokens = cfg_.max_output_tokens;
  req.seed_hint = static_cast<std::int64_t>(derive_seed(fnv1a64(nonce), role) >> 1);
  return req;
}

ChatRequest Reasoner::analyst_request(const std::string& rendered_tree, const std::string& nonce) const {
  return make_request(roles::kAnalyst, {{"tree", rendered_tree}, {"nonce", nonce}},
                      cfg_.generation_temperature, nonce);
}

ChatRequest Reasoner::critic_request(const std::string& rendered_tree, const std::string& analyst,
                                     const std::string& nonce) const {
  return make_request(roles::kCritic, {{"tree", rendered_tree}, {"analyst", analyst}, {"nonce", nonce}},
                      cfg_.generation_temperature, nonce);
}

ChatRequest Reasoner::empiricist_request(const std::string& rendered_tree, const std::string& analyst,
                                         const std::string& nonce) const {
  return make_request(roles::kEmpiricist,
                      {{"tree", rendered_tree}, {"analyst", analyst}, {"nonce", nonce}},
                      cfg_.generation_temperature, nonce);
}

ChatRequest Reasoner::synthesizer_request(const std::string& rendered_tree, const std::string& analyst,
                                          const std::string& critic, const std::string& empiricist,
                                          const std::string& nonce) const {
  return make_request(roles::kSynthesizer,
                      {{"tree", cfg_.synthesizer_sees_tree ? rendered_tree : std::string("(thread omitted)")},
                       {"analyst", analyst},
                       {"critic", critic},
                       {"empiricist", empiricist},
                       {"nonce", nonce}},
                      cfg_.synthesizer_temperature, nonce);
}

Inference Reasoner::run_debate(const ConversationTree& tree, int generation_index) const {
  const std::string rendered = render_tree(tree, cfg_.limits);
  const std::string tag = nonce(tree.id, generation_index);

  DebateTranscript tr;
  tr.tree_id = tree.id;
  tr.generation_index = generation_index;

  auto call = [&](int round, std::string_view role, const ChatRequest& req) {
    try {
      return backend_.chat(req);
    } catch (const std::exception& e) {
      throw DebateError(round, std::string(role), generation_index, e.what());
    }
  };

  tr.analyst_output = call(1, roles::kAnalyst, analyst_request(rendered, tag));
  tr.rounds_completed = 1;

  Inference inf;
  if (cfg_.analyst_only) {
    inf.text = tr.analyst_output;
    inf.evidence_level = extract_evidence_level(inf.text);
    inf.transcript = std::move(tr);
    return inf;
  }

  // Round two: both reviewers see the same analysis. Critic is slot 0 so a
  // double failure reports the critic.
  std::string reviews[2];
  parallel_for(2, 2, [&](std::size_t slot) {
    if (slot == 0)
      reviews[0] = call(2, roles::kCritic, critic_request(rendered, tr.analyst_output, tag));
    else
      reviews[1] = call(2, roles::kEmpiricist, empiricist_request(rendered, tr.analyst_output, tag));
  });
  tr.critic_output = std::move(reviews[0]);
  tr.empiricist_output = std::move(reviews[1]);
  tr.rounds_completed = 2;

  tr.synthesis = call(3, roles::kSynthesizer,
                      synthesizer_request(rendered, tr.analyst_output, tr.critic_output,
                                          tr.empiricist_output, tag));
  tr.rounds_completed = 3;

  inf.text = tr.synthesis;
  inf.evidence_level = extract_evidence_level(tr.synthesis);
  inf.transcript = std::move(tr);
  return inf;
}

GenerationOutcome Reasoner::generate_inferences(const ConversationTree& tree, int n) const {
  if (n < 1) throw ValidationError("generate_inferences: n must be >= 1");
  std::vector<std::optional<Inference>> slots(static_cast<std::size_t>(n));
  std::vector<std::string> errors(static_cast<std::size_t>(n));
  const bool fail_fast = cfg_.failure_policy == FailurePolicy::FailFast;

  parallel_for(slots.size(), static_cast<std::size_t>(backend_.config().max_inflight), [&](std::size_t i) {
    const int gen = static_cast<int>(i);
    try {
      Inference inf = run_debate(tree, gen);
      inf.embedding = backend_.embed(inf.text);
      slots[i] = std::move(inf);
    } catch (const DebateError& e) {
      if (fail_fast) throw;
      errors[i] = e.what();
    } catch (const std::exception& e) {
      const std::string msg = "generation " + std::to_string(gen) + ": " + e.what();
      if (fail_fast) throw PipelineError(msg);
      errors[i] = msg;
    }
  });

  GenerationOutcome out;
  for (std::size_t i = 0; i < slots.size(); ++i) {
    if (slots[i]) out.inferences.push_back(std::move(*slots[i]));
    else if (!errors[i].empty()) out.skipped.push_back(errors[i]);
  }
  if (out.inferences.empty())
    throw PipelineError("all " + std::to_string(n) + " debates failed for tree '" + tree.id + "'");
  return out;
}

}  // namespace macr
