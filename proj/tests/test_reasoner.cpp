#include <doctest.h>

#include <iomanip>
#include <mutex>
#include <set>

#include <json.hpp>

#include "macr/reasoner.hpp"
#include "macr/stores.hpp"
#include "support.hpp"

using namespace macr;

namespace {

ReasonerConfig base_config() { return PipelineConfig::defaults().reasoner; }

const ConversationTree& fixture_tree(std::size_t i = 6) {
  static const Dataset ds = testing::fixture_dataset();
  return ds.trees.at(i);
}

// Records every request so prompt contents can be inspected.
struct Recorder {
  std::mutex mu;
  std::vector<ChatRequest> seen;
  ChatResponder wrap(ChatResponder inner) {
    return [this, inner](const ChatRequest& r) {
      {
        std::lock_guard lock(mu);
        seen.push_back(r);
      }
      return inner(r);
    };
  }
  std::vector<ChatRequest> of(const std::string& role) {
    std::lock_guard lock(mu);
    std::vector<ChatRequest> out;
    for (const auto& r : seen)
      if (r.role_name == role) out.push_back(r);
    return out;
  }
};

ChatResponder letters() {
  return [](const ChatRequest& r) -> std::string {
    if (r.role_name == "analyst") return "A";
    if (r.role_name == "critic") return "C";
    if (r.role_name == "empiricist") return "E";
    return "S";
  };
}

}  // namespace

TEST_CASE("four-role pass-through") {
  auto b = testing::make_backend(letters());
  const Reasoner r(*b, PromptSet::builtin(), base_config());
  const auto inf = r.run_debate(fixture_tree(), 0);
  CHECK(inf.text == "S");
  CHECK(inf.transcript.analyst_output == "A");
  CHECK(inf.transcript.critic_output == "C");
  CHECK(inf.transcript.empiricist_output == "E");
  CHECK(inf.transcript.synthesis == "S");
  CHECK(inf.transcript.rounds_completed == 3);
  CHECK(inf.evidence_level == EvidenceLevel::Unspecified);
  CHECK_FALSE(inf.embedding.has_value());
}

TEST_CASE("each round sees the earlier outputs") {
  Recorder rec;
  auto b = testing::make_backend(rec.wrap(letters()));
  const Reasoner r(*b, PromptSet::builtin(), base_config());
  r.run_debate(fixture_tree(), 0);
  const std::string rendered = render_tree(fixture_tree());
  const auto analyst = rec.of("analyst").at(0);
  CHECK(analyst.user_prompt.find(rendered) != std::string::npos);
  for (const auto* role : {"critic", "empiricist"}) {
    const auto req = rec.of(role).at(0);
    CHECK(req.user_prompt.find(rendered) != std::string::npos);
    CHECK(req.user_prompt.find("\nA\n") != std::string::npos);
  }
  const auto synth = rec.of("synthesizer").at(0);
  for (const auto* piece : {"\nA\n", "\nC\n", "\nE\n"}) CHECK(synth.user_prompt.find(piece) != std::string::npos);
  CHECK(synth.user_prompt.find(rendered) != std::string::npos);
  CHECK(synth.temperature == doctest::Approx(0.2));
  CHECK(analyst.temperature == doctest::Approx(0.9));
}

TEST_CASE("synthesizer can be kept from the thread") {
  Recorder rec;
  auto b = testing::make_backend(rec.wrap(letters()));
  auto cfg = base_config();
  cfg.synthesizer_sees_tree = false;
  const Reasoner r(*b, PromptSet::builtin(), cfg);
  r.run_debate(fixture_tree(), 0);
  CHECK(rec.of("synthesizer").at(0).user_prompt.find(fixture_tree().post_text) == std::string::npos);
}

TEST_CASE("round-two empiricist failure names round and role") {
  auto b = testing::make_backend([](const ChatRequest& r) -> std::string {
    if (r.role_name == "empiricist") throw TransportError("boom", false);
    return "ok";
  });
  const Reasoner r(*b, PromptSet::builtin(), base_config());
  try {
    r.run_debate(fixture_tree(), 4);
    FAIL("expected DebateError");
  } catch (const DebateError& e) {
    CHECK(e.round() == 2);
    CHECK(e.role() == "empiricist");
    CHECK(e.generation_index() == 4);
  }
}

TEST_CASE("analyst only stops after round one") {
  Recorder rec;
  auto b = testing::make_backend(rec.wrap(letters()));
  auto cfg = base_config();
  cfg.analyst_only = true;
  const Reasoner r(*b, PromptSet::builtin(), cfg);
  const auto inf = r.run_debate(fixture_tree(), 0);
  CHECK(inf.text == "A");
  CHECK(inf.transcript.rounds_completed == 1);
  CHECK(inf.transcript.critic_output.empty());
  CHECK(inf.transcript.synthesis.empty());
  CHECK(rec.seen.size() == 1);
}

TEST_CASE("golden debate over a fixture tree") {
  auto b = testing::scripted_backend();
  const Reasoner r(*b, PromptSet::builtin(), base_config());
  const auto once = r.run_debate(fixture_tree(), 2);
  auto b2 = testing::scripted_backend();
  const Reasoner r2(*b2, PromptSet::builtin(), base_config());
  const auto twice = r2.run_debate(fixture_tree(), 2);
  CHECK(once.transcript == twice.transcript);

  nlohmann::ordered_json j;
  j["tree_id"] = once.transcript.tree_id;
  j["generation"] = once.transcript.generation_index;
  j["nonce"] = r.nonce(fixture_tree().id, 2);
  j["evidence_level"] = std::string(to_string(once.evidence_level));
  j["analyst"] = once.transcript.analyst_output;
  j["critic"] = once.transcript.critic_output;
  j["empiricist"] = once.transcript.empiricist_output;
  j["synthesis"] = once.transcript.synthesis;
  const std::string actual = j.dump(2) + "\n";
  CHECK(actual == testing::check_golden("debate_transcript.json", actual));
}

TEST_CASE("n=1 equals a single debate") {
  auto b = testing::scripted_backend();
  const Reasoner r(*b, PromptSet::builtin(), base_config());
  const auto out = r.generate_inferences(fixture_tree(), 1);
  REQUIRE(out.inferences.size() == 1);
  const auto single = r.run_debate(fixture_tree(), 0);
  CHECK(out.inferences[0].text == single.text);
  CHECK(out.inferences[0].transcript == single.transcript);
  REQUIRE(out.inferences[0].embedding.has_value());
  CHECK(*out.inferences[0].embedding == b->embed(single.text));
}

TEST_CASE("n=10 distinct debates give ten distinct embeddings") {
  auto b = testing::scripted_backend();
  const Reasoner r(*b, PromptSet::builtin(), base_config());
  const auto out = r.generate_inferences(fixture_tree(), 10);
  REQUIRE(out.inferences.size() == 10);
  std::set<std::vector<double>> distinct;
  std::set<std::string> nonces;
  for (int i = 0; i < 10; ++i) {
    const auto& inf = out.inferences[static_cast<std::size_t>(i)];
    CHECK(inf.generation_index() == i);
    distinct.insert(std::vector<double>(inf.embedding->data(), inf.embedding->data() + inf.embedding->size()));
    nonces.insert(r.nonce(fixture_tree().id, i));
  }
  CHECK(distinct.size() == 10);
  CHECK(nonces.size() == 10);
}

TEST_CASE("identical syntheses are kept, not deduplicated") {
  auto b = testing::make_backend([](const ChatRequest& r) {
    return r.role_name == "synthesizer" ? std::string("same synthesis") : r.role_name + r.user_prompt.substr(0, 3);
  });
  const Reasoner r(*b, PromptSet::builtin(), base_config());
  const auto out = r.generate_inferences(fixture_tree(), 3);
  REQUIRE(out.inferences.size() == 3);
  for (const auto& inf : out.inferences) CHECK(inf.text == "same synthesis");
}

TEST_CASE("generation failures: fail fast or skip and record") {
  // Generation 3 is the only one whose analyst prompt carries its nonce.
  auto cfg = base_config();
  auto probe = testing::scripted_backend();
  const std::string bad_nonce = Reasoner(*probe, PromptSet::builtin(), cfg).nonce(fixture_tree().id, 3);
  auto responder = [bad_nonce, inner = make_scripted_responder(RiskLabelSet::generic())](const ChatRequest& r) {
    if (r.role_name == "critic" && r.user_prompt.find(bad_nonce) != std::string::npos)
      throw TransportError("down", false);
    return inner(r);
  };

  auto b = testing::make_backend(responder);
  const Reasoner strict(*b, PromptSet::builtin(), cfg);
  try {
    strict.generate_inferences(fixture_tree(), 5);
    FAIL("expected DebateError");
  } catch (const DebateError& e) {
    CHECK(e.generation_index() == 3);
    CHECK(e.round() == 2);
  }

  cfg.failure_policy = FailurePolicy::SkipAndRecord;
  auto b2 = testing::make_backend(responder);
  const Reasoner lenient(*b2, PromptSet::builtin(), cfg);
  const auto out = lenient.generate_inferences(fixture_tree(), 5);
  CHECK(out.inferences.size() == 4);
  REQUIRE(out.skipped.size() == 1);
  for (const auto& inf : out.inferences) CHECK(inf.generation_index() != 3);
}

TEST_CASE("evidence level extraction") {
  CHECK(extract_evidence_level("Summary.\nEvidence level: High") == EvidenceLevel::High);
  CHECK(extract_evidence_level("evidence level - medium") == EvidenceLevel::Medium);
  CHECK(extract_evidence_level("Evidence level: Low\n...\nEvidence level: High") == EvidenceLevel::High);
  CHECK(extract_evidence_level("The signal is Low overall.") == EvidenceLevel::Low);
  CHECK(extract_evidence_level("a low mood, nothing else") == EvidenceLevel::Unspecified);
  CHECK(extract_evidence_level("") == EvidenceLevel::Unspecified);
}

TEST_CASE("inference store round trip") {
  auto b = testing::scripted_backend();
  const Reasoner r(*b, PromptSet::builtin(), base_config());
  const auto out = r.generate_inferences(fixture_tree(), 3);
  std::stringstream store;
  for (const auto& inf : out.inferences) store << serialize_inference(inf) << '\n';
  const auto groups = read_inference_store(store);
  REQUIRE(groups.size() == 1);
  CHECK(groups[0].first == fixture_tree().id);
  REQUIRE(groups[0].second.size() == 3);
  for (std::size_t i = 0; i < 3; ++i) {
    CHECK(groups[0].second[i].text == out.inferences[i].text);
    CHECK(groups[0].second[i].transcript == out.inferences[i].transcript);
    CHECK(*groups[0].second[i].embedding == *out.inferences[i].embedding);
  }
}
