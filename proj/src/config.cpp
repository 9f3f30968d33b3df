#include "macr/config.hpp"

#include <charconv>
#include <fstream>
#include <istream>
#include <sstream>

#include "macr/seeds.hpp"

namespace macr {

namespace fs = std::filesystem;

namespace {

const std::vector<std::string_view> kChatRoles = {roles::kAnalyst,  roles::kCritic,
                                                  roles::kEmpiricist, roles::kSynthesizer,
                                                  roles::kDecision, roles::kDirect};

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

[[noreturn]] void bad(const std::string& key, const std::string& what) {
  throw ValidationError(key + ": " + what);
}

long long to_int(const std::string& key, const std::string& v) {
  long long out = 0;
  auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc{} || p != v.data() + v.size()) bad(key, "expected an integer, got '" + v + "'");
  return out;
}

std::uint64_t to_u64(const std::string& key, const std::string& v) {
  std::uint64_t out = 0;
  auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc{} || p != v.data() + v.size())
    bad(key, "expected a non-negative integer, got '" + v + "'");
  return out;
}

double to_double(const std::string& key, const std::string& v) {
  try {
    std::size_t used = 0;
    double d = std::stod(v, &used);
    if (used != v.size()) throw std::invalid_argument(v);
    return d;
  } catch (const std::exception&) {
    bad(key, "expected a number, got '" + v + "'");
  }
}

bool to_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  bad(key, "expected true/false, got '" + v + "'");
}

Route stub_route() { return {"stub://local", "stub", ""}; }

}  // namespace

std::string_view to_string(Ablation a) {
  switch (a) {
    case Ablation::Full: return "full";
    case Ablation::NoReasoner: return "no_reasoner";
    case Ablation::NoDecider: return "no_decider";
    case Ablation::AnalystOnly: return "analyst_only";
  }
  return "full";
}

Ablation parse_ablation(std::string_view name) {
  for (auto a : {Ablation::Full, Ablation::NoReasoner, Ablation::NoDecider, Ablation::AnalystOnly})
    if (to_string(a) == name) return a;
  throw ValidationError("ablation: unknown variant '" + std::string(name) +
                        "' (expected full, no_reasoner, no_decider or analyst_only)");
}

PipelineConfig PipelineConfig::defaults() {
  PipelineConfig cfg;
  cfg.backend.routes.emplace(std::string(roles::kEmbedding), stub_route());
  for (auto r : kChatRoles) cfg.backend.routes.emplace(std::string(r), stub_route());
  cfg.set_master_seed(cfg.master_seed);
  return cfg;
}

void PipelineConfig::set_master_seed(std::uint64_t seed) {
  master_seed = seed;
  fold_seed = derive_seed(seed, "fold");
  mediator.seed = derive_seed(seed, "kmeans");
  reasoner.nonce_seed = derive_seed(seed, "nonce.reasoner");
  decider.nonce_seed = derive_seed(seed, "nonce.decider");
}

std::vector<std::string> PipelineConfig::validate() const {
  std::vector<std::string> warnings;
  if (reasoner.n < 1) bad("n", "must be >= 1 (got " + std::to_string(reasoner.n) + ")");
  if (mediator.k < 1) bad("k", "must be >= 1 (got " + std::to_string(mediator.k) + ")");
  if (decider.t < 1) bad("t", "must be >= 1 (got " + std::to_string(decider.t) + ")");
  if (reasoner.n < mediator.k)
    warnings.push_back("n=" + std::to_string(reasoner.n) + " is smaller than k=" +
                       std::to_string(mediator.k) + "; the effective cluster count will be reduced");
  for (const auto& [name, lim] : {std::pair{"reasoner", reasoner.limits}, std::pair{"decider", decider.limits}}) {
    if (lim.max_depth < 1) bad("max_depth", std::string(name) + " limit must be >= 1");
    if (lim.max_nodes < 1) bad("max_nodes", std::string(name) + " limit must be >= 1");
  }
  auto check_temp = [](const char* key, double t) {
    if (!(t >= 0.0 && t <= 2.0)) bad(key, "must be in [0, 2]");
  };
  check_temp("temperature.generation", reasoner.generation_temperature);
  check_temp("temperature.synthesizer", reasoner.synthesizer_temperature);
  check_temp("temperature.decision", decider.temperature);
  if (reasoner.max_output_tokens < 1) bad("max_tokens.reasoning", "must be >= 1");
  if (decider.max_output_tokens < 1) bad("max_tokens.decision", "must be >= 1");
  if (mediator.max_iters < 1) bad("kmeans.max_iters", "must be >= 1");
  if (mediator.restarts < 1) bad("kmeans.restarts", "must be >= 1");
  if (!(mediator.tol >= 0.0)) bad("kmeans.tol", "must be >= 0");
  if (backend.embedding_dim < 1) bad("embedding.dim", "must be >= 1");
  if (backend.retry.max_attempts < 1) bad("retry.max_attempts", "must be >= 1");
  if (backend.max_inflight < 1) bad("max_inflight", "must be >= 1");
  for (auto r : kChatRoles) {
    auto it = backend.routes.find(std::string(r));
    if (it == backend.routes.end()) bad("route." + std::string(r), "no route configured");
    if (!stub && (it->second.endpoint.empty() || it->second.model.empty()))
      bad("route." + std::string(r), "endpoint and model are required");
  }
  if (!backend.routes.count(backend.embedding_role)) bad("route.embedding", "no route configured");
  for (const auto& [role, path] : template_paths)
    if (!fs::exists(path)) bad("template." + role, "file not found: " + path.string());
  prompts.validate(reasoner.synthesizer_sees_tree);
  return warnings;
}

PipelineConfig parse_config(std::istream& in, const fs::path& base_dir) {
  PipelineConfig cfg = PipelineConfig::defaults();
  std::map<std::string, std::string> kv;
  std::string line;
  std::size_t line_number = 0;
  while (std::getline(in, line)) {
    ++line_number;
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    if (trim(line).empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ValidationError("config line " + std::to_string(line_number) + ": expected key = value");
    kv[trim(std::string_view(line).substr(0, eq))] = trim(std::string_view(line).substr(eq + 1));
  }

  if (auto it = kv.find("seed"); it != kv.end()) cfg.set_master_seed(to_u64("seed", it->second));

  std::map<std::string, Route> route_overrides;
  Route default_route;
  bool have_default = false;

  for (const auto& [key, value] : kv) {
    if (key == "seed") continue;
    else if (key == "n") cfg.reasoner.n = static_cast<int>(to_int(key, value));
    else if (key == "k") cfg.mediator.k = static_cast<int>(to_int(key, value));
    else if (key == "t") cfg.decider.t = static_cast<int>(to_int(key, value));
    else if (key == "labels") cfg.labels = RiskLabelSet::parse(value);
    else if (key == "ablation") cfg.ablation = parse_ablation(value);
    else if (key == "tie_rule") {
      if (value != "higher_risk") bad(key, "only 'higher_risk' is supported");
    } else if (key == "failure_policy") {
      if (value == "fail_fast") cfg.reasoner.failure_policy = FailurePolicy::FailFast;
      else if (value == "skip_and_record") cfg.reasoner.failure_policy = FailurePolicy::SkipAndRecord;
      else bad(key, "expected fail_fast or skip_and_record");
    } else if (key == "max_depth") cfg.reasoner.limits.max_depth = cfg.decider.limits.max_depth = static_cast<int>(to_int(key, value));
    else if (key == "max_nodes") cfg.reasoner.limits.max_nodes = cfg.decider.limits.max_nodes = static_cast<int>(to_int(key, value));
    else if (key == "synthesizer_sees_tree") cfg.reasoner.synthesizer_sees_tree = to_bool(key, value);
    else if (key == "normalize_embeddings") cfg.mediator.normalize_embeddings = to_bool(key, value);
    else if (key == "seed.fold") cfg.fold_seed = to_u64(key, value);
    else if (key == "seed.kmeans") cfg.mediator.seed = to_u64(key, value);
    else if (key == "seed.nonce.reasoner") cfg.reasoner.nonce_seed = to_u64(key, value);
    else if (key == "seed.nonce.decider") cfg.decider.nonce_seed = to_u64(key, value);
    else if (key == "kmeans.max_iters") cfg.mediator.max_iters = static_cast<int>(to_int(key, value));
    else if (key == "kmeans.tol") cfg.mediator.tol = to_double(key, value);
    else if (key == "kmeans.restarts") cfg.mediator.restarts = static_cast<int>(to_int(key, value));
    else if (key == "temperature.generation") cfg.reasoner.generation_temperature = to_double(key, value);
    else if (key == "temperature.synthesizer") cfg.reasoner.synthesizer_temperature = to_double(key, value);
    else if (key == "temperature.decision") cfg.decider.temperature = to_double(key, value);
    else if (key == "max_tokens.reasoning") cfg.reasoner.max_output_tokens = static_cast<int>(to_int(key, value));
    else if (key == "max_tokens.decision") cfg.decider.max_output_tokens = static_cast<int>(to_int(key, value));
    else if (key == "backend") {
      if (value == "stub") cfg.stub = true;
      else if (value == "http") cfg.stub = false;
      else bad(key, "expected stub or http");
    } else if (key == "cache.enabled") cfg.backend.cache_enabled = to_bool(key, value);
    else if (key == "cache.dir") cfg.backend.cache_dir = value.empty() ? fs::path{} : fs::path(value);
    else if (key == "embedding.dim") cfg.backend.embedding_dim = static_cast<int>(to_int(key, value));
    else if (key == "retry.max_attempts") cfg.backend.retry.max_attempts = static_cast<int>(to_int(key, value));
    else if (key == "retry.backoff_ms") cfg.backend.retry.backoff = std::chrono::milliseconds(to_int(key, value));
    else if (key == "timeout_s") cfg.backend.timeout = std::chrono::seconds(to_int(key, value));
    else if (key == "max_inflight") cfg.backend.max_inflight = static_cast<int>(to_int(key, value));
    else if (key.rfind("route.", 0) == 0) {
      const auto dot = key.rfind('.');
      const std::string role = key.substr(6, dot - 6);
      const std::string field = key.substr(dot + 1);
      if (role.empty() || dot <= 6) bad(key, "expected route.<role>.<field>");
      Route& r = role == "default" ? (have_default = true, default_route) : route_overrides[role];
      if (field == "endpoint") r.endpoint = value;
      else if (field == "model") r.model = value;
      else if (field == "api_key_env") r.api_key_env = value;
      else bad(key, "unknown route field '" + field + "'");
    } else if (key.rfind("template.", 0) == 0) {
      const std::string role = key.substr(9);
      fs::path p = value;
      if (p.is_relative() && !base_dir.empty()) p = base_dir / p;
      cfg.template_paths[role] = p;
    } else {
      bad(key, "unknown config key");
    }
  }

  if (!cfg.stub || have_default || !route_overrides.empty()) {
    std::vector<std::string> all_roles(kChatRoles.begin(), kChatRoles.end());
    all_roles.push_back(cfg.backend.embedding_role);
    for (const auto& role : all_roles) {
      Route r = have_default ? default_route : (cfg.stub ? stub_route() : Route{});
      if (auto it = route_overrides.find(role); it != route_overrides.end()) {
        if (!it->second.endpoint.empty()) r.endpoint = it->second.endpoint;
        if (!it->second.model.empty()) r.model = it->second.model;
        if (!it->second.api_key_env.empty()) r.api_key_env = it->second.api_key_env;
      }
      cfg.backend.routes[role] = r;
    }
    for (const auto& [role, _] : route_overrides)
      if (std::find(all_roles.begin(), all_roles.end(), role) == all_roles.end())
        bad("route." + role, "unknown role");
  }

  for (const auto& [role, path] : cfg.template_paths) {
    if (!cfg.prompts.templates.count(role)) bad("template." + role, "unknown role");
    if (!fs::exists(path)) bad("template." + role, "file not found: " + path.string());
    cfg.prompts.templates[role] = load_template(path, role);
  }
  return cfg;
}

PipelineConfig load_config(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open config file " + path.string());
  return parse_config(in, path.parent_path());
}

std::string describe_plan(const PipelineConfig& cfg) {
  std::ostringstream out;
  out << "backend=" << (cfg.stub ? "stub" : "http") << '\n'
      << "ablation=" << to_string(cfg.ablation) << '\n'
      << "labels=" << cfg.labels.joined() << '\n'
      << "n=" << cfg.reasoner.n << '\n'
      << "K=" << cfg.mediator.k << '\n'
      << "T=" << cfg.decider.t << '\n'
      << "seed=" << cfg.master_seed << '\n'
      << "seed.fold=" << cfg.fold_seed << '\n'
      << "seed.kmeans=" << cfg.mediator.seed << '\n'
      << "max_depth=" << cfg.reasoner.limits.max_depth << '\n'
      << "max_nodes=" << cfg.reasoner.limits.max_nodes << '\n'
      << "tie_rule=higher_risk\n"
      << "failure_policy="
      << (cfg.reasoner.failure_policy == FailurePolicy::FailFast ? "fail_fast" : "skip_and_record") << '\n'
      << "cache=" << (cfg.backend.cache_enabled ? (cfg.backend.cache_dir.empty() ? "memory" : cfg.backend.cache_dir.string()) : "off")
      << '\n';
  for (const auto& [role, route] : cfg.backend.routes)
    out << "route." << role << '=' << route.model << " @ " << route.endpoint << '\n';
  for (const auto& [role, tmpl] : cfg.prompts.templates) out << "template." << role << '=' << tmpl.source << '\n';
  return out.str();
}

}  // namespace macr
