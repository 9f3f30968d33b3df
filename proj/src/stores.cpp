#include "macr/stores.hpp"

#include <algorithm>
#include <istream>

#include <json.hpp>

#include "macr/seeds.hpp"

namespace macr {

using json = nlohmann::json;
using ordered_json = nlohmann::ordered_json;

std::string serialize_inference(const Inference& inf) {
  ordered_json j;
  j["tree_id"] = inf.transcript.tree_id;
  j["generation"] = inf.transcript.generation_index;
  j["text"] = inf.text;
  j["evidence_level"] = std::string(to_string(inf.evidence_level));
  if (inf.embedding)
    j["embedding"] = std::vector<double>(inf.embedding->data(), inf.embedding->data() + inf.embedding->size());
  ordered_json tr;
  tr["rounds"] = inf.transcript.rounds_completed;
  tr["analyst"] = inf.transcript.analyst_output;
  tr["critic"] = inf.transcript.critic_output;
  tr["empiricist"] = inf.transcript.empiricist_output;
  tr["synthesis"] = inf.transcript.synthesis;
  j["transcript"] = std::move(tr);
  return j.dump();
}

Inference parse_inference(std::string_view line) {
  try {
    const json j = json::parse(line);
    Inference inf;
    inf.text = j.at("text").get<std::string>();
    if (inf.text.empty()) throw ValidationError("inference record with empty text");
    inf.evidence_level = parse_evidence_level_name(j.value("evidence_level", std::string("Unspecified")));
    inf.transcript.tree_id = j.at("tree_id").get<std::string>();
    inf.transcript.generation_index = j.at("generation").get<int>();
    if (auto it = j.find("embedding"); it != j.end()) {
      const auto v = it->get<std::vector<double>>();
      inf.embedding = Eigen::Map<const Embedding>(v.data(), static_cast<Eigen::Index>(v.size()));
    }
    if (auto it = j.find("transcript"); it != j.end()) {
      inf.transcript.rounds_completed = it->value("rounds", 0);
      inf.transcript.analyst_output = it->value("analyst", std::string{});
      inf.transcript.critic_output = it->value("critic", std::string{});
      inf.transcript.empiricist_output = it->value("empiricist", std::string{});
      inf.transcript.synthesis = it->value("synthesis", std::string{});
    }
    return inf;
  } catch (const json::exception& e) {
    throw ValidationError(std::string("malformed inference record: ") + e.what());
  }
}

std::vector<std::pair<std::string, std::vector<Inference>>> read_inference_store(std::istream& in) {
  std::vector<std::pair<std::string, std::vector<Inference>>> groups;
  std::string line;
  std::size_t line_number = 0;
  while (std::getline(in, line)) {
    ++line_number;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    Inference inf;
    try {
      inf = parse_inference(line);
    } catch (const ValidationError& e) {
      throw ValidationError("inference store line " + std::to_string(line_number) + ": " + e.what());
    }
    auto it = std::find_if(groups.begin(), groups.end(),
                           [&](const auto& g) { return g.first == inf.transcript.tree_id; });
    if (it == groups.end()) {
      groups.emplace_back(inf.transcript.tree_id, std::vector<Inference>{});
      it = std::prev(groups.end());
    }
    it->second.push_back(std::move(inf));
  }
  return groups;
}

std::string serialize_mediators(const MediatorSet& set) {
  ordered_json j;
  j["tree_id"] = set.tree_id;
  j["seed"] = set.seed;
  j["n"] = set.n;
  j["k_requested"] = set.requested_k;
  j["k_effective"] = set.k();
  j["inertia"] = set.inertia;
  j["iterations"] = set.iterations_run;
  j["cluster_sizes"] = set.cluster_sizes;
  ordered_json probs = ordered_json::array();
  for (int s : set.cluster_sizes) probs.push_back(std::to_string(s) + "/" + std::to_string(set.n));
  j["probabilities"] = std::move(probs);
  j["assignments"] = set.assignments;
  ordered_json reps = ordered_json::array();
  for (const auto& r : set.representatives) {
    ordered_json rj;
    rj["generation"] = r.generation_index();
    rj["evidence_level"] = std::string(to_string(r.evidence_level));
    rj["text"] = r.text;
    reps.push_back(std::move(rj));
  }
  j["representatives"] = std::move(reps);
  return j.dump();
}

ChatResponder make_scripted_responder(const RiskLabelSet& labels) {
  return [labels](const ChatRequest& req) -> std::string {
    const std::string digest = sha256_hex(req.role_name + '\n' + req.user_prompt);
    const std::uint64_t h = fnv1a64(digest);
    const std::string tag = digest.substr(0, 8);
    if (req.role_name == roles::kDecision || req.role_name == roles::kDirect)
      return "Risk level: " + labels.name(static_cast<std::size_t>(h % labels.count()));

    static const char* const kStates[] = {"withdrawn and self-critical", "hopeful but fragile",
                                          "angry at perceived dismissal", "numb and detached",
                                          "reassured by peer support"};
    static const char* const kLevels[] = {"Low", "Medium", "High"};
    const std::string state = kStates[h % 5];
    const std::string body = "## Cognitive\nThe poster appraises the replies as " + state +
                             ".\n## Emotional\nAffect consistent with being " + state +
                             ".\n## Behavioral\nLikely follow-up behaviour: " + state + ".";
    if (req.role_name == roles::kSynthesizer)
      return "Synthesis " + tag + "\n" + body + "\n## Inference\nThe poster feels " + state +
             ".\nEvidence level: " + kLevels[(h >> 8) % 3];
    return req.role_name + " " + tag + "\n" + body;
  };
}

}  // namespace macr
