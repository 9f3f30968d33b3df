#include "macr/decider.hpp"

#include <cctype>
#include <cmath>
#include <cstdio>
#include <numeric>

#include <json.hpp>

#include "macr/parallel.hpp"
#include "macr/seeds.hpp"

namespace macr {

using ordered_json = nlohmann::ordered_json;

// --- distributions ----------------------------------------------------------

RiskDistribution RiskDistribution::from_counts(const std::vector<std::int64_t>& counts) {
  RiskDistribution d;
  d.numerators = counts;
  d.denominator = 0;
  for (auto c : counts) {
    if (c < 0) throw ValidationError("negative count in frequency vector");
    d.denominator += c;
  }
  if (d.denominator == 0) throw ValidationError("frequency vector with zero total");
  d.probs.reserve(counts.size());
  for (auto c : counts) d.probs.push_back(static_cast<double>(c) / static_cast<double>(d.denominator));
  return d;
}

RiskDistribution RiskDistribution::from_probs(std::vector<double> probs) {
  RiskDistribution d;
  d.probs = std::move(probs);
  return d;
}

RiskDistribution vote_distribution(const std::vector<std::size_t>& votes, std::size_t label_count) {
  if (votes.empty()) throw ValidationError("vote_distribution: T must be >= 1");
  std::vector<std::int64_t> counts(label_count, 0);
  for (auto v : votes) {
    if (v >= label_count) throw ValidationError("vote_distribution: label index out of range");
    ++counts[v];
  }
  return RiskDistribution::from_counts(counts);
}

RiskDistribution frontdoor_mixture(const MediatorSet& mediators, const std::vector<RiskDistribution>& vote_dists) {
  const auto k = mediators.probabilities.size();
  if (vote_dists.size() != k)
    throw ValidationError("frontdoor_mixture: " + std::to_string(k) + " mediators but " +
                          std::to_string(vote_dists.size()) + " vote distributions");
  if (k == 0) throw ValidationError("frontdoor_mixture: no mediators");
  const auto levels = vote_dists.front().size();
  for (const auto& d : vote_dists)
    if (d.size() != levels) throw ValidationError("frontdoor_mixture: vote distributions differ in length");
  const double weight_sum = std::accumulate(mediators.probabilities.begin(), mediators.probabilities.end(), 0.0);
  if (std::abs(weight_sum - 1.0) > 1e-9)
    throw ValidationError("frontdoor_mixture: mediator probabilities sum to " + std::to_string(weight_sum));

  const bool sizes_usable =
      mediators.cluster_sizes.size() == k && mediators.n > 0 &&
      std::accumulate(mediators.cluster_sizes.begin(), mediators.cluster_sizes.end(), 0) == mediators.n;
  const bool exact = sizes_usable && std::all_of(vote_dists.begin(), vote_dists.end(),
                                                 [](const RiskDistribution& d) { return d.exact(); });
  if (exact) {
    std::int64_t common = 1;
    for (const auto& d : vote_dists) common = std::lcm(common, d.denominator);
    std::vector<std::int64_t> num(levels, 0);
    for (std::size_t i = 0; i < k; ++i) {
      const std::int64_t scale = mediators.cluster_sizes[i] * (common / vote_dists[i].denominator);
      for (std::size_t y = 0; y < levels; ++y) num[y] += scale * vote_dists[i].numerators[y];
    }
    RiskDistribution out;
    out.numerators = std::move(num);
    out.denominator = static_cast<std::int64_t>(mediators.n) * common;
    for (auto v : out.numerators)
      out.probs.push_back(static_cast<double>(v) / static_cast<double>(out.denominator));
    return out;
  }

  std::vector<long double> acc(levels, 0.0L);
  for (std::size_t i = 0; i < k; ++i) {
    const long double w = mediators.probabilities[i];
    for (std::size_t y = 0; y < levels; ++y) {
      const double p = vote_dists[i].probs[y];
      if (!(p >= 0.0)) throw ValidationError("frontdoor_mixture: negative or NaN probability");
      acc[y] += w * p;
    }
  }
  const long double total = std::accumulate(acc.begin(), acc.end(), 0.0L);
  if (std::abs(static_cast<double>(total) - 1.0) > 1e-9)
    throw ValidationError("frontdoor_mixture: inputs are not distributions (mass " +
                          std::to_string(static_cast<double>(total)) + ")");
  RiskDistribution out;
  for (auto a : acc) out.probs.push_back(static_cast<double>(a / total));
  return out;
}

std::size_t argmax_higher_risk(const RiskDistribution& dist) {
  if (dist.probs.empty()) throw ValidationError("argmax of an empty distribution");
  std::size_t best = 0;
  for (std::size_t y = 1; y < dist.probs.size(); ++y) {
    const bool ge = dist.exact() ? dist.numerators[y] >= dist.numerators[best] : dist.probs[y] >= dist.probs[best];
    if (ge) best = y;
  }
  return best;
}

// --- demonstrations ---------------------------------------------------------

std::vector<std::string> DemonstrationSet::source_ids() const {
  std::vector<std::string> ids;
  for (const auto& d : items) ids.push_back(d.tree_id);
  return ids;
}

CoverageError::CoverageError(std::size_t level, const std::string& level_name)
    : PipelineError("demonstration pool has no candidate for risk level " + level_name + " (index " +
                    std::to_string(level) + ")"),
      level_(level) {}

namespace {

Dataset labelled_only(const Dataset& pool) {
  Dataset out;
  out.label_set = pool.label_set;
  out.name = pool.name;
  for (const auto& t : pool.trees)
    if (t.gold_label) out.trees.push_back(t);
  return out;
}

}  // namespace

DemonstrationPool::DemonstrationPool(const Dataset& pool, Backend& backend, const RenderLimits& limits)
    : pool_(labelled_only(pool)), limits_(limits) {
  embeddings_.resize(pool_.trees.size());
  parallel_for(pool_.trees.size(), static_cast<std::size_t>(backend.config().max_inflight), [&](std::size_t i) {
    embeddings_[i] = backend.embed(render_tree(pool_.trees[i], limits_));
  });
}

DemonstrationPool::DemonstrationPool(const Dataset& pool, std::vector<Embedding> embeddings,
                                     const RenderLimits& limits)
    : limits_(limits) {
  if (embeddings.size() != pool.trees.size())
    throw ValidationError("demonstration pool: one embedding per pool tree is required");
  pool_.label_set = pool.label_set;
  pool_.name = pool.name;
  for (std::size_t i = 0; i < pool.trees.size(); ++i) {
    if (!pool.trees[i].gold_label) continue;
    pool_.trees.push_back(pool.trees[i]);
    embeddings_.push_back(std::move(embeddings[i]));
  }
}

DemonstrationSet DemonstrationPool::retrieve(const ConversationTree& query, const Embedding& query_embedding) const {
  const auto levels = pool_.label_set.count();
  std::vector<int> best(levels, -1);
  std::vector<double> best_sim(levels, 0.0);
  for (std::size_t i = 0; i < pool_.trees.size(); ++i) {
    const auto& t = pool_.trees[i];
    if (t.id == query.id) continue;
    const auto level = *t.gold_label;
    const double sim = cosine_similarity(query_embedding, embeddings_[i]);
    int& b = best[level];
    if (b < 0 || sim > best_sim[level] ||
        (sim == best_sim[level] && t.id < pool_.trees[static_cast<std::size_t>(b)].id)) {
      b = static_cast<int>(i);
      best_sim[level] = sim;
    }
  }
  DemonstrationSet set;
  for (std::size_t level = 0; level < levels; ++level) {
    if (best[level] < 0) throw CoverageError(level, pool_.label_set.name(level));
    const auto& t = pool_.trees[static_cast<std::size_t>(best[level])];
    set.items.push_back({t.id, level, render_tree(t, limits_), best_sim[level]});
  }
  return set;
}

// --- label parsing ----------------------------------------------------------

namespace {

std::string lower(std::string_view s) {
  std::string out(s);
  for (auto& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

bool word_char(char c) { return std::isalnum(static_cast<unsigned char>(c)) || c == '_'; }

std::string strip_decoration(std::string_view s) {
  const std::string_view junk = " \t\r\n*`\"'.:;!()[]";
  const auto b = s.find_first_not_of(junk);
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(junk);
  return std::string(s.substr(b, e - b + 1));
}

}  // namespace

std::optional<std::size_t> parse_label(std::string_view completion, const RiskLabelSet& labels) {
  const std::string whole = lower(strip_decoration(completion));
  for (std::size_t i = 0; i < labels.count(); ++i)
    if (whole == lower(labels.name(i))) return i;

  const std::string text = lower(completion);
  std::optional<std::size_t> found;
  for (std::size_t i = 0; i < labels.count(); ++i) {
    const std::string name = lower(labels.name(i));
    for (auto pos = text.find(name); pos != std::string::npos; pos = text.find(name, pos + 1)) {
      const bool left_ok = pos == 0 || !word_char(text[pos - 1]);
      const bool right_ok = pos + name.size() >= text.size() || !word_char(text[pos + name.size()]);
      if (!left_ok || !right_ok) continue;
      if (found && *found != i) return std::nullopt;
      found = i;
      break;
    }
  }
  return found;
}

LabelParseError::LabelParseError(std::vector<std::string> raw)
    : PipelineError([&] {
        std::string msg = "could not parse a risk level from the decision output";
        for (std::size_t i = 0; i < raw.size(); ++i) msg += "; attempt " + std::to_string(i + 1) + ": \"" + raw[i] + "\"";
        return msg;
      }()),
      raw_(std::move(raw)) {}

// --- decider ----------------------------------------------------------------

Decider::Decider(Backend& backend, PromptSet prompts, DeciderConfig cfg, RiskLabelSet labels)
    : backend_(backend), prompts_(std::move(prompts)), cfg_(cfg), labels_(std::move(labels)) {}

std::string Decider::nonce(const std::string& tree_id, int mediator_index, int t_index) const {
  const auto v = derive_seed(cfg_.nonce_seed, tree_id + "#" + std::to_string(mediator_index) + "#" +
                                                  std::to_string(t_index));
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

ChatRequest Decider::decision_request(const Inference* rep, const ConversationTree& tree,
                                      const DemonstrationSet& demos, const std::string& nonce) const {
  std::string demo_text;
  for (std::size_t i = 0; i < demos.items.size(); ++i) {
    const auto& d = demos.items[i];
    if (i) demo_text += "\n\n";
    demo_text += "Example " + std::to_string(i + 1) + " (risk level: " + labels_.name(d.label) + ")\n" + d.rendering;
  }
  std::map<std::string, std::string> values = {{"labels", labels_.joined(", ")},
                                               {"demonstrations", demo_text},
                                               {"tree", render_tree(tree, cfg_.limits)},
                                               {"nonce", nonce}};
  if (rep) values["inference"] = rep->text;
  const auto& tmpl = prompts_.at(rep ? roles::kDecision : roles::kDecisionTreeOnly);
  ChatRequest req;
  req.role_name = std::string(roles::kDecision);
  req.system_prompt = fill_placeholders(tmpl.system, values);
  req.user_prompt = fill_placeholders(tmpl.user, values);
  req.temperature = cfg_.temperature;
  req.max_output_tokens = cfg_.max_output_tokens;
  req.seed_hint = static_cast<std::int64_t>(fnv1a64(nonce) >> 1);
  return req;
}

ChatRequest Decider::direct_request(const Inference& rep, const std::string& nonce) const {
  const std::map<std::string, std::string> values = {
      {"labels", labels_.joined(", ")}, {"inference", rep.text}, {"nonce", nonce}};
  const auto& tmpl = prompts_.at(roles::kDirect);
  ChatRequest req;
  req.role_name = std::string(roles::kDirect);
  req.system_prompt = fill_placeholders(tmpl.system, values);
  req.user_prompt = fill_placeholders(tmpl.user, values);
  req.temperature = cfg_.temperature;
  req.max_output_tokens = cfg_.max_output_tokens;
  req.seed_hint = static_cast<std::int64_t>(fnv1a64(nonce) >> 1);
  return req;
}

DecisionResult Decider::ask(ChatRequest req) const {
  std::vector<std::string> raw;
  raw.push_back(backend_.chat(req));
  if (auto label = parse_label(raw.back(), labels_)) return {*label, raw.back(), 1};
  req.user_prompt += "\n\nYour previous answer could not be read. Reply with exactly one of: " +
                     labels_.joined(", ") + ". Output the risk level name and nothing else.";
  raw.push_back(backend_.chat(req));
  if (auto label = parse_label(raw.back(), labels_)) return {*label, raw.back(), 2};
  throw LabelParseError(std::move(raw));
}

DecisionResult Decider::decide_once(const Inference* rep, const ConversationTree& tree,
                                    const DemonstrationSet& demos, int t_index, int mediator_index) const {
  return ask(decision_request(rep, tree, demos, nonce(tree.id, mediator_index, t_index)));
}

DecisionResult Decider::direct_label(const Inference& rep, const std::string& tree_id, int mediator_index) const {
  return ask(direct_request(rep, nonce(tree_id, mediator_index, 0)));
}

RiskDistribution Decider::vote(const Inference* rep, const ConversationTree& tree, const DemonstrationSet& demos,
                               int t, int mediator_index, VoteRecord* record) const {
  if (t < 1) throw ValidationError("vote: T must be >= 1");
  std::vector<DecisionResult> results(static_cast<std::size_t>(t));
  parallel_for(results.size(), static_cast<std::size_t>(backend_.config().max_inflight), [&](std::size_t i) {
    try {
      results[i] = decide_once(rep, tree, demos, static_cast<int>(i), mediator_index);
    } catch (const std::exception& e) {
      throw PipelineError("vote t=" + std::to_string(i) + ": " + e.what());
    }
  });
  std::vector<std::size_t> votes;
  for (const auto& r : results) votes.push_back(r.label);
  if (record) {
    record->mediator_index = mediator_index;
    record->votes = votes;
    record->per_call_raw.clear();
    for (const auto& r : results) record->per_call_raw.push_back(r.raw);
  }
  return vote_distribution(votes, labels_.count());
}

// --- pipeline ---------------------------------------------------------------

StageError::StageError(std::string stage, std::string tree_id, const std::string& cause)
    : PipelineError("stage '" + stage + "' failed for tree '" + tree_id + "': " + cause),
      stage_(std::move(stage)),
      tree_id_(std::move(tree_id)) {}

namespace {

ReasonerConfig reasoner_config_for(const PipelineConfig& cfg) {
  ReasonerConfig rc = cfg.reasoner;
  rc.analyst_only = cfg.ablation == Ablation::AnalystOnly;
  return rc;
}

template <typename Fn>
auto stage(const char* name, const std::string& tree_id, Fn&& fn) -> decltype(fn()) {
  try {
    return fn();
  } catch (const StageError&) {
    throw;
  } catch (const std::exception& e) {
    throw StageError(name, tree_id, e.what());
  }
}

}  // namespace

Pipeline::Pipeline(const PipelineConfig& cfg, Backend& backend)
    : cfg_(cfg),
      backend_(backend),
      reasoner_(backend, cfg.prompts, reasoner_config_for(cfg)),
      decider_(backend, cfg.prompts, cfg.decider, cfg.labels) {}

DemonstrationPool Pipeline::make_pool(const Dataset& pool) const {
  return DemonstrationPool(pool, backend_, cfg_.decider.limits);
}

Prediction Pipeline::predict(const ConversationTree& tree, const DemonstrationPool& pool) const {
  Prediction out;
  out.tree_id = tree.id;
  Provenance& prov = out.provenance;
  prov.ablation = cfg_.ablation;
  prov.t = cfg_.decider.t;
  const std::size_t workers = static_cast<std::size_t>(backend_.config().max_inflight);

  auto retrieve = [&] {
    return stage("retrieval", tree.id, [&] {
      const Embedding q = backend_.embed(render_tree(tree, cfg_.decider.limits));
      DemonstrationSet demos = pool.retrieve(tree, q);
      prov.demo_ids = demos.source_ids();
      ++prov.demo_retrievals;
      return demos;
    });
  };

  if (cfg_.ablation == Ablation::NoReasoner) {
    const DemonstrationSet demos = retrieve();
    VoteRecord record;
    out.distribution = stage("decision", tree.id, [&] {
      return decider_.vote(nullptr, tree, demos, cfg_.decider.t, -1, &record);
    });
    prov.votes.push_back(std::move(record));
    out.label = argmax_higher_risk(out.distribution);
    return out;
  }

  GenerationOutcome gen = stage("reasoning", tree.id, [&] {
    return reasoner_.generate_inferences(tree, cfg_.reasoner.n);
  });
  for (const auto& inf : gen.inferences) prov.transcripts.push_back(inf.transcript);
  prov.skipped_generations = gen.skipped;

  const MediatorSet mediators = stage("clustering", tree.id, [&] {
    return build_mediators(gen.inferences, cfg_.mediator, tree.id);
  });
  prov.n = mediators.n;
  prov.requested_k = cfg_.mediator.k;
  prov.effective_k = mediators.k();
  prov.kmeans_seed = mediators.seed;
  prov.inertia = mediators.inertia;
  prov.cluster_sizes = mediators.cluster_sizes;
  prov.mediator_probabilities = mediators.probabilities;
  for (const auto& rep : mediators.representatives) prov.representative_generations.push_back(rep.generation_index());

  const auto k = static_cast<std::size_t>(mediators.k());
  std::vector<RiskDistribution> dists(k);
  prov.votes.resize(k);

  if (cfg_.ablation == Ablation::NoDecider) {
    std::vector<DecisionResult> results(k);
    stage("decision", tree.id, [&] {
      parallel_for(k, workers, [&](std::size_t i) {
        results[i] = decider_.direct_label(mediators.representatives[i], tree.id, static_cast<int>(i));
      });
      return 0;
    });
    for (std::size_t i = 0; i < k; ++i) {
      prov.votes[i] = {static_cast<int>(i), {results[i].label}, {results[i].raw}};
      dists[i] = vote_distribution({results[i].label}, cfg_.labels.count());
    }
  } else {
    const DemonstrationSet demos = retrieve();
    const auto t = static_cast<std::size_t>(cfg_.decider.t);
    std::vector<DecisionResult> grid(k * t);
    stage("decision", tree.id, [&] {
      parallel_for(grid.size(), workers, [&](std::size_t cell) {
        const auto i = cell / t;
        const auto ti = cell % t;
        try {
          grid[cell] = decider_.decide_once(&mediators.representatives[i], tree, demos, static_cast<int>(ti),
                                            static_cast<int>(i));
        } catch (const std::exception& e) {
          throw PipelineError("mediator " + std::to_string(i) + " vote t=" + std::to_string(ti) + ": " + e.what());
        }
      });
      return 0;
    });
    for (std::size_t i = 0; i < k; ++i) {
      VoteRecord& rec = prov.votes[i];
      rec.mediator_index = static_cast<int>(i);
      for (std::size_t ti = 0; ti < t; ++ti) {
        rec.votes.push_back(grid[i * t + ti].label);
        rec.per_call_raw.push_back(grid[i * t + ti].raw);
      }
      dists[i] = vote_distribution(rec.votes, cfg_.labels.count());
    }
  }

  out.distribution = stage("mixture", tree.id, [&] { return frontdoor_mixture(mediators, dists); });
  out.label = argmax_higher_risk(out.distribution);
  return out;
}

std::string serialize_prediction(const Prediction& p, const RiskLabelSet& labels) {
  const Provenance& pv = p.provenance;
  ordered_json transcripts = ordered_json::array();
  for (const auto& t : pv.transcripts) {
    ordered_json j;
    j["generation"] = t.generation_index;
    j["rounds"] = t.rounds_completed;
    j["analyst"] = t.analyst_output;
    j["critic"] = t.critic_output;
    j["empiricist"] = t.empiricist_output;
    j["synthesis"] = t.synthesis;
    transcripts.push_back(std::move(j));
  }
  ordered_json votes = ordered_json::array();
  for (const auto& v : pv.votes) {
    ordered_json j;
    j["mediator"] = v.mediator_index;
    ordered_json names = ordered_json::array();
    for (auto idx : v.votes) names.push_back(labels.name(idx));
    j["votes"] = std::move(names);
    j["raw"] = v.per_call_raw;
    votes.push_back(std::move(j));
  }
  ordered_json prov;
  prov["ablation"] = std::string(to_string(pv.ablation));
  prov["n"] = pv.n;
  prov["k_requested"] = pv.requested_k;
  prov["k_effective"] = pv.effective_k;
  prov["t"] = pv.t;
  prov["kmeans_seed"] = pv.kmeans_seed;
  // Rounded so the file does not depend on the last bits of a 1024-term sum.
  prov["inertia"] = std::round(pv.inertia * 1e9) / 1e9;
  prov["cluster_sizes"] = pv.cluster_sizes;
  prov["mediator_probabilities"] = pv.mediator_probabilities;
  prov["representative_generations"] = pv.representative_generations;
  prov["demo_ids"] = pv.demo_ids;
  prov["demo_retrievals"] = pv.demo_retrievals;
  prov["votes"] = std::move(votes);
  prov["skipped_generations"] = pv.skipped_generations;
  prov["transcripts"] = std::move(transcripts);

  ordered_json j;
  j["tree_id"] = p.tree_id;
  j["label"] = labels.name(p.label);
  j["label_index"] = p.label;
  j["probs"] = p.distribution.probs;
  j["provenance"] = std::move(prov);
  return j.dump();
}

}  // namespace macr
