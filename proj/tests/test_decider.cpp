#include <doctest.h>

#include <map>
#include <set>

#include "macr/decider.hpp"
#include "macr/stores.hpp"
#include "oracles.hpp"
#include "support.hpp"

using namespace macr;

namespace {

const RiskLabelSet kLabels = RiskLabelSet::generic();

MediatorSet mediators_with_sizes(const std::vector<int>& sizes) {
  MediatorSet m;
  m.cluster_sizes = sizes;
  for (int s : sizes) m.n += s;
  for (int s : sizes) m.probabilities.push_back(static_cast<double>(s) / m.n);
  m.representatives.resize(sizes.size());
  return m;
}

Inference rep_with_text(const std::string& text) {
  Inference inf;
  inf.text = text;
  return inf;
}

Dataset pool_one_per_level() {
  Dataset ds;
  for (std::size_t l = 0; l < 4; ++l)
    ds.trees.push_back(testing::simple_tree("p" + std::to_string(l), "pool post " + std::to_string(l), l));
  return ds;
}

}  // namespace

TEST_CASE("vote frequencies") {
  const auto d = vote_distribution({1, 1, 3}, 4);
  CHECK(d.probs == std::vector<double>{0.0, 2.0 / 3.0, 0.0, 1.0 / 3.0});
  CHECK(d.numerators == std::vector<std::int64_t>{0, 2, 0, 1});
  CHECK(d.denominator == 3);
  const auto one = vote_distribution({2}, 4);
  CHECK(one.probs == std::vector<double>{0, 0, 1, 0});
  CHECK_THROWS_AS(vote_distribution({4}, 4), ValidationError);
  CHECK_THROWS_AS(vote_distribution({}, 4), ValidationError);
}

TEST_CASE("mixture: K=1 is the identity") {
  const auto v = vote_distribution({0, 2, 2}, 4);
  const auto mix = frontdoor_mixture(mediators_with_sizes({10}), {v});
  CHECK(mix.probs == v.probs);
}

TEST_CASE("mixture: convex combination of one-hot votes") {
  const auto mix = frontdoor_mixture(mediators_with_sizes({6, 4}), {vote_distribution({0}, 4), vote_distribution({1}, 4)});
  CHECK(mix.probs == std::vector<double>{0.6, 0.4, 0.0, 0.0});
}

TEST_CASE("mixture: random fixtures match exact rational arithmetic") {
  Rng rng(5);
  for (int f = 0; f < 200; ++f) {
    const int k = 1 + static_cast<int>(rng.below(3));
    std::vector<int> sizes;
    for (int i = 0; i < k; ++i) sizes.push_back(1 + static_cast<int>(rng.below(6)));
    std::vector<RiskDistribution> votes;
    std::vector<std::vector<std::int64_t>> counts;
    for (int i = 0; i < k; ++i) {
      const int t = 1 + static_cast<int>(rng.below(5));
      std::vector<std::size_t> v;
      for (int j = 0; j < t; ++j) v.push_back(rng.below(4));
      votes.push_back(vote_distribution(v, 4));
      counts.push_back(votes.back().numerators);
    }
    const auto mix = frontdoor_mixture(mediators_with_sizes(sizes), votes);
    const auto exact = oracle::exact_mixture(sizes, counts);
    double sum = 0;
    for (std::size_t y = 0; y < 4; ++y) {
      CHECK(oracle::is_nearest_double(mix.probs[y], exact[y]));
      CHECK(oracle::Rational(mix.numerators[y], mix.denominator) == exact[y]);
      sum += mix.probs[y];
    }
    CHECK(std::abs(sum - 1.0) < 1e-9);
  }
}

TEST_CASE("mixture: inexact inputs are renormalised") {
  auto m = mediators_with_sizes({1, 2});
  m.probabilities = {1.0 / 3.0, 2.0 / 3.0};
  const auto mix = frontdoor_mixture(m, {RiskDistribution::from_probs({0.1, 0.2, 0.3, 0.4}),
                                         RiskDistribution::from_probs({0.7, 0.1, 0.1, 0.1})});
  CHECK_FALSE(mix.exact());
  double sum = 0;
  for (double p : mix.probs) sum += p;
  CHECK(std::abs(sum - 1.0) < 1e-12);
  CHECK(mix.probs[0] == doctest::Approx(0.1 / 3 + 1.4 / 3));
  CHECK_THROWS_AS(frontdoor_mixture(m, {RiskDistribution::from_probs({1, 0, 0, 0})}), ValidationError);
}

TEST_CASE("argmax ties go to the higher risk level") {
  CHECK(argmax_higher_risk(RiskDistribution::from_probs({0.5, 0.5, 0, 0})) == 1);
  CHECK(argmax_higher_risk(RiskDistribution::from_probs({0.25, 0.25, 0.25, 0.25})) == 3);
  CHECK(argmax_higher_risk(RiskDistribution::from_probs({0.7, 0.1, 0.1, 0.1})) == 0);
  CHECK(argmax_higher_risk(RiskDistribution::from_counts({1, 2, 2, 0})) == 2);
}

TEST_CASE("label parsing") {
  CHECK(parse_label("L2", kLabels) == 2);
  CHECK(parse_label("  l3 \n", kLabels) == 3);
  CHECK(parse_label("I would place this at L1 given the replies.", kLabels) == 1);
  CHECK_FALSE(parse_label("somewhere between L1 and L2", kLabels).has_value());
  CHECK_FALSE(parse_label("no idea", kLabels).has_value());
  CHECK_FALSE(parse_label("L12", kLabels).has_value());
  const auto named = RiskLabelSet::parse("none,low,moderate,severe");
  CHECK(parse_label("Risk level: moderate", named) == 2);
}

TEST_CASE("retrieval: one tree per level is forced") {
  auto b = testing::scripted_backend();
  const DemonstrationPool pool(pool_one_per_level(), *b, {});
  const auto q = testing::simple_tree("query", "something unrelated");
  const auto demos = pool.retrieve(q, b->embed(render_tree(q)));
  REQUIRE(demos.items.size() == 4);
  CHECK(demos.source_ids() == std::vector<std::string>{"p0", "p1", "p2", "p3"});
  for (std::size_t l = 0; l < 4; ++l) CHECK(demos.items[l].label == l);
}

TEST_CASE("retrieval: identical content is chosen with similarity 1") {
  auto b = testing::scripted_backend();
  auto ds = pool_one_per_level();
  ds.trees.push_back(testing::simple_tree("twin", "the query post", 2));
  const DemonstrationPool pool(ds, *b, {});
  const auto q = testing::simple_tree("twin", "the query post");
  // Same id is excluded; a same-content tree under a new id is preferred.
  auto copy = ds;
  copy.trees.back().id = "twin-copy";
  const DemonstrationPool pool2(copy, *b, {});
  const auto demos = pool2.retrieve(q, b->embed(render_tree(q)));
  CHECK(demos.items[2].tree_id == "twin-copy");
  CHECK(demos.items[2].similarity == doctest::Approx(1.0));
  const auto self_excluded = pool.retrieve(q, b->embed(render_tree(q)));
  CHECK(self_excluded.items[2].tree_id == "p2");
}

TEST_CASE("retrieval matches an exhaustive scan over a 20 tree pool") {
  Dataset ds;
  for (int i = 0; i < 20; ++i)
    ds.trees.push_back(testing::simple_tree("pool" + std::to_string(i), "pool text number " + std::to_string(i),
                                            static_cast<std::size_t>(i % 4)));
  auto b = testing::scripted_backend();
  const DemonstrationPool pool(ds, *b, {});
  for (int qi = 0; qi < 10; ++qi) {
    const auto q = testing::simple_tree("q" + std::to_string(qi), "query " + std::to_string(qi));
    const auto qe = b->embed(render_tree(q));
    const auto demos = pool.retrieve(q, qe);
    for (std::size_t l = 0; l < 4; ++l) {
      std::string best;
      double best_sim = -2;
      for (const auto& t : ds.trees) {
        if (*t.gold_label != l) continue;
        const double s = qe.dot(b->embed(render_tree(t))) / (qe.norm() * b->embed(render_tree(t)).norm());
        if (s > best_sim || (s == best_sim && t.id < best)) {
          best_sim = s;
          best = t.id;
        }
      }
      CHECK(demos.items[l].tree_id == best);
    }
  }
}

TEST_CASE("retrieval needs every level") {
  auto b = testing::scripted_backend();
  auto ds = pool_one_per_level();
  ds.trees.pop_back();
  const DemonstrationPool pool(ds, *b, {});
  const auto q = testing::simple_tree("q", "x");
  try {
    pool.retrieve(q, b->embed(render_tree(q)));
    FAIL("expected CoverageError");
  } catch (const CoverageError& e) {
    CHECK(e.level() == 3);
  }
}

TEST_CASE("decision prompt contents") {
  auto b = testing::scripted_backend();
  const Decider d(*b, PromptSet::builtin(), PipelineConfig::defaults().decider, kLabels);
  const DemonstrationPool pool(pool_one_per_level(), *b, {});
  const auto tree = testing::fixture_dataset().trees[8];
  const auto demos = pool.retrieve(tree, b->embed(render_tree(tree)));
  const auto rep = rep_with_text("The poster feels unheard.");
  const auto req = d.decision_request(&rep, tree, demos, "nonce123");
  CHECK(req.role_name == "decision");
  for (std::size_t l = 0; l < 4; ++l) {
    CHECK(req.user_prompt.find("(risk level: L" + std::to_string(l) + ")") != std::string::npos);
    CHECK(req.user_prompt.find(demos.items[l].rendering) != std::string::npos);
  }
  CHECK(req.user_prompt.find(render_tree(tree)) != std::string::npos);
  CHECK(req.user_prompt.find("The poster feels unheard.") != std::string::npos);
  CHECK(req.user_prompt.find("Answer with the risk level name only") != std::string::npos);

  const auto bare = d.decision_request(nullptr, tree, demos, "nonce123");
  CHECK(bare.user_prompt.find(render_tree(tree)) != std::string::npos);
  CHECK(bare.user_prompt.find("Inferred psychological impact") == std::string::npos);
}

TEST_CASE("decide: strict answer, lenient answer, reprompt, failure") {
  const auto tree = testing::simple_tree("t", "post");
  DemonstrationSet none;
  const auto rep = rep_with_text("r");
  auto cfg = PipelineConfig::defaults().decider;
  {
    auto b = testing::make_backend([](const ChatRequest&) { return std::string("L2"); });
    CHECK(Decider(*b, PromptSet::builtin(), cfg, kLabels).decide_once(&rep, tree, none, 0).label == 2);
  }
  {
    auto b = testing::make_backend([](const ChatRequest&) { return std::string("My answer is L3."); });
    CHECK(Decider(*b, PromptSet::builtin(), cfg, kLabels).decide_once(&rep, tree, none, 0).label == 3);
  }
  {
    // First completion is unusable, the stricter retry is answered.
    int calls = 0;
    auto b2 = testing::make_backend([&calls](const ChatRequest&) { return std::string(calls++ == 0 ? "unsure" : "L1"); });
    const auto res = Decider(*b2, PromptSet::builtin(), cfg, kLabels).decide_once(&rep, tree, none, 0);
    CHECK(res.label == 1);
    CHECK(res.attempts == 2);
  }
  {
    auto b = testing::make_backend([](const ChatRequest&) { return std::string("cannot say"); });
    try {
      Decider(*b, PromptSet::builtin(), cfg, kLabels).decide_once(&rep, tree, none, 0);
      FAIL("expected LabelParseError");
    } catch (const LabelParseError& e) {
      CHECK(e.raw() == std::vector<std::string>{"cannot say", "cannot say"});
    }
  }
}

TEST_CASE("T=3 votes are deterministic and use distinct calls") {
  const auto tree = testing::fixture_dataset().trees[3];
  const auto rep = rep_with_text("The poster feels tired.");
  auto run = [&] {
    std::shared_ptr<StubTransport> stub;
    auto b = testing::scripted_backend(&stub);
    const Decider d(*b, PromptSet::builtin(), PipelineConfig::defaults().decider, kLabels);
    const DemonstrationPool pool(pool_one_per_level(), *b, {});
    const auto demos = pool.retrieve(tree, b->embed(render_tree(tree)));
    VoteRecord rec;
    const auto dist = d.vote(&rep, tree, demos, 3, 0, &rec);
    CHECK(rec.votes.size() == 3);
    CHECK(rec.per_call_raw.size() == 3);
    std::set<std::string> nonces;
    for (int t = 0; t < 3; ++t) nonces.insert(d.nonce(tree.id, 0, t));
    CHECK(nonces.size() == 3);
    return dist;
  };
  const auto a = run();
  const auto b = run();
  CHECK(a.probs == b.probs);
  CHECK(a.denominator == 3);
}

TEST_CASE("pipeline predictions over the fixture set") {
  const auto ds = testing::fixture_dataset();
  auto cfg = PipelineConfig::defaults();
  std::shared_ptr<StubTransport> stub;
  auto b = testing::scripted_backend(&stub);
  const Pipeline p(cfg, *b);
  const auto pool = p.make_pool(ds);
  const auto pred = p.predict(ds.trees[0], pool);
  CHECK(pred.provenance.transcripts.size() == 10);
  CHECK(pred.provenance.effective_k == 3);
  CHECK(pred.provenance.votes.size() == 3);
  CHECK(pred.provenance.demo_retrievals == 1);
  CHECK(pred.label == argmax_higher_risk(pred.distribution));
  double sum = 0;
  for (double x : pred.distribution.probs) sum += x;
  CHECK(std::abs(sum - 1) < 1e-12);
  for (const auto& id : pred.provenance.demo_ids) CHECK(id != ds.trees[0].id);

  // Mixture equals the hand recomputation from provenance.
  std::vector<double> manual(4, 0.0);
  for (std::size_t i = 0; i < pred.provenance.votes.size(); ++i)
    for (auto v : pred.provenance.votes[i].votes)
      manual[v] += pred.provenance.mediator_probabilities[i] / 3.0;
  for (std::size_t y = 0; y < 4; ++y) CHECK(pred.distribution.probs[y] == doctest::Approx(manual[y]).epsilon(1e-12));
}

TEST_CASE("ablation: no reasoner decides from the thread alone") {
  const auto ds = testing::fixture_dataset();
  auto cfg = PipelineConfig::defaults();
  cfg.ablation = Ablation::NoReasoner;
  std::vector<std::string> prompts;
  std::mutex mu;
  auto inner = make_scripted_responder(kLabels);
  auto b = testing::make_backend([&](const ChatRequest& r) {
    std::lock_guard lock(mu);
    prompts.push_back(r.role_name);
    return inner(r);
  });
  const Pipeline p(cfg, *b);
  const auto pool = p.make_pool(ds);
  const auto pred = p.predict(ds.trees[5], pool);
  CHECK(pred.provenance.transcripts.empty());
  CHECK(pred.provenance.votes.size() == 1);
  CHECK(pred.provenance.votes[0].mediator_index == -1);
  for (const auto& role : prompts) CHECK(role == "decision");
  CHECK(prompts.size() == 3);
}

TEST_CASE("ablation: no decider makes no retrievals") {
  const auto ds = testing::fixture_dataset();
  auto cfg = PipelineConfig::defaults();
  cfg.ablation = Ablation::NoDecider;
  auto b = testing::scripted_backend();
  const Pipeline p(cfg, *b);
  const auto pred = p.predict(ds.trees[5], p.make_pool(ds));
  CHECK(pred.provenance.demo_retrievals == 0);
  CHECK(pred.provenance.demo_ids.empty());
  CHECK(pred.provenance.transcripts.size() == 10);
}

TEST_CASE("stage errors name the stage and tree") {
  const auto ds = testing::fixture_dataset();
  auto cfg = PipelineConfig::defaults();
  auto inner = make_scripted_responder(kLabels);
  auto b = testing::make_backend([&](const ChatRequest& r) -> std::string {
    if (r.role_name == "decision") return "no label here";
    return inner(r);
  });
  const Pipeline p(cfg, *b);
  try {
    p.predict(ds.trees[1], p.make_pool(ds));
    FAIL("expected StageError");
  } catch (const StageError& e) {
    CHECK(e.stage() == "decision");
    CHECK(e.tree_id() == ds.trees[1].id);
  }
}
