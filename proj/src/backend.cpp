#include "macr/backend.hpp"

#include <cmath>
#include <fstream>
#include <sstream>
#include <thread>

#include <openssl/evp.h>

#include <json.hpp>

#include "macr/seeds.hpp"

namespace macr {

using json = nlohmann::json;
namespace fs = std::filesystem;

std::string sha256_hex(std::string_view bytes) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), digest, &len, EVP_sha256(), nullptr) != 1)
    throw Error("SHA-256 digest failed");
  static constexpr char hex[] = "0123456789abcdef";
  std::string out;
  out.reserve(2 * len);
  for (unsigned int i = 0; i < len; ++i) {
    out.push_back(hex[digest[i] >> 4]);
    out.push_back(hex[digest[i] & 0xf]);
  }
  return out;
}

Embedding hash_unit_vector(std::string_view text, int dim) {
  const std::string digest = sha256_hex(text);
  std::uint64_t seed = 0;
  for (int i = 0; i < 16; ++i) {
    const char c = digest[static_cast<std::size_t>(i)];
    seed = (seed << 4) | static_cast<std::uint64_t>(c <= '9' ? c - '0' : c - 'a' + 10);
  }
  Rng rng(seed);
  Embedding v(dim);
  do {
    for (int i = 0; i < dim; ++i) v[i] = 2.0 * rng.uniform01() - 1.0;
  } while (v.squaredNorm() == 0.0);
  v /= std::sqrt(v.squaredNorm());
  return v;
}

bool all_finite(const Embedding& v) { return v.allFinite(); }

const Route& BackendConfig::route_for(const std::string& role) const {
  auto it = routes.find(role);
  if (it == routes.end()) throw ValidationError("no backend route configured for role '" + role + "'");
  return it->second;
}

DimensionError::DimensionError(int expected, int actual)
    : PipelineError("embedding dimension mismatch: expected " + std::to_string(expected) +
                    ", got " + std::to_string(actual)),
      expected_(expected),
      actual_(actual) {}

// --- stub -----------------------------------------------------------------

std::string StubTransport::chat(const Route&, const ChatRequest& req) {
  ++chat_calls_;
  return responder_(req);
}

std::vector<double> StubTransport::embed(const Route&, const std::string& text, int dim) {
  ++embed_calls_;
  Embedding v = hash_unit_vector(text, dim);
  return {v.data(), v.data() + v.size()};
}

// --- cache ----------------------------------------------------------------

fs::path ResponseCache::path_for(const std::string& digest) const {
  return dir_ / digest.substr(0, 2) / (digest + ".json");
}

std::optional<std::string> ResponseCache::get(const std::string& digest) {
  {
    std::lock_guard lock(mu_);
    if (auto it = memory_.find(digest); it != memory_.end()) return it->second;
  }
  if (dir_.empty()) return std::nullopt;
  std::ifstream in(path_for(digest));
  if (!in) return std::nullopt;
  json entry;
  try {
    entry = json::parse(in);
  } catch (const json::exception&) {
    return std::nullopt;  // torn or foreign file: treat as a miss
  }
  if (entry.value("digest", std::string{}) != digest || !entry.contains("response"))
    return std::nullopt;
  std::string response = entry["response"].dump();
  std::lock_guard lock(mu_);
  memory_.emplace(digest, response);
  return response;
}

void ResponseCache::put(const std::string& digest, const std::string& response_json) {
  std::lock_guard lock(mu_);
  memory_[digest] = response_json;
  if (dir_.empty()) return;
  const fs::path target = path_for(digest);
  fs::create_directories(target.parent_path());
  const fs::path tmp = target.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::trunc);
    json entry;
    entry["digest"] = digest;
    entry["response"] = json::parse(response_json);
    out << entry.dump() << '\n';
    if (!out) throw PipelineError("cannot write cache entry " + tmp.string());
  }
  fs::rename(tmp, target);
}

CacheStats cache_stats(const fs::path& dir) {
  CacheStats stats;
  if (dir.empty() || !fs::exists(dir)) return stats;
  for (const auto& entry : fs::recursive_directory_iterator(dir)) {
    if (!entry.is_regular_file() || entry.path().extension() != ".json") continue;
    ++stats.entries;
    stats.bytes += entry.file_size();
  }
  return stats;
}

std::size_t cache_clear(const fs::path& dir) {
  std::size_t removed = 0;
  if (dir.empty() || !fs::exists(dir)) return removed;
  std::vector<fs::path> doomed;
  for (const auto& entry : fs::recursive_directory_iterator(dir))
    if (entry.is_regular_file() && entry.path().extension() == ".json") doomed.push_back(entry.path());
  for (const auto& p : doomed) removed += fs::remove(p) ? 1 : 0;
  for (const auto& entry : fs::directory_iterator(dir))
    if (entry.is_directory() && fs::is_empty(entry.path())) fs::remove(entry.path());
  return removed;
}

// --- backend --------------------------------------------------------------

Backend::Backend(BackendConfig config, std::shared_ptr<Transport> transport)
    : config_(std::move(config)),
      transport_(std::move(transport)),
      cache_(config_.cache_dir),
      inflight_(std::clamp(config_.max_inflight, 1, 1024)) {
  if (!transport_) throw ValidationError("backend needs a transport");
  if (config_.embedding_dim < 1) throw ValidationError("embedding_dim must be >= 1");
  if (config_.retry.max_attempts < 1) throw ValidationError("retry.max_attempts must be >= 1");
}

std::string Backend::chat_cache_key(const ChatRequest& req) const {
  const Route& route = config_.route_for(req.role_name);
  json payload;
  payload["kind"] = "chat";
  payload["system"] = req.system_prompt;
  payload["user"] = req.user_prompt;
  payload["temperature"] = req.temperature;
  payload["max_tokens"] = req.max_output_tokens;
  payload["seed"] = req.seed_hint ? json(*req.seed_hint) : json(nullptr);
  return sha256_hex(route.model + '\n' + payload.dump());
}

std::string Backend::embed_cache_key(const std::string& text) const {
  const Route& route = config_.route_for(config_.embedding_role);
  json payload;
  payload["kind"] = "embed";
  payload["input"] = text;
  payload["dim"] = config_.embedding_dim;
  return sha256_hex(route.model + '\n' + payload.dump());
}

template <typename Fn>
auto Backend::with_retries(Fn&& call, const std::string& what) -> decltype(call()) {
  auto delay = config_.retry.backoff;
  for (int attempt = 1;; ++attempt) {
    try {
      inflight_.acquire();
      struct Release {
        std::counting_semaphore<1024>& s;
        ~Release() { s.release(); }
      } release{inflight_};
      ++transport_calls_;
      if (transport_->is_network()) ++network_calls_;
      return call();
    } catch (const TransportError& e) {
      const bool last = attempt >= config_.retry.max_attempts;
      if (!e.transient() || last) {
        if (e.status() != 0)
          throw ProviderError(what + ": provider returned HTTP " + std::to_string(e.status()) +
                                  " after " + std::to_string(attempt) + " attempt(s): " + e.what(),
                              e.status());
        throw TransportError(what + ": " + e.what() + " (after " + std::to_string(attempt) +
                                 " attempt(s))",
                             false);
      }
    }
    ++retries_;
    if (delay.count() > 0) std::this_thread::sleep_for(delay);
    delay = std::chrono::milliseconds(
        static_cast<std::int64_t>(static_cast<double>(delay.count()) * config_.retry.backoff_multiplier));
  }
}

std::string Backend::chat(const ChatRequest& req) {
  if (req.user_prompt.empty())
    throw ValidationError("chat request for role '" + req.role_name + "' has an empty user prompt");
  if (req.max_output_tokens < 1) throw ValidationError("max_output_tokens must be >= 1");
  ++chat_requests_;
  const Route& route = config_.route_for(req.role_name);
  const std::string key = chat_cache_key(req);
  if (config_.cache_enabled) {
    if (auto hit = cache_.get(key)) {
      ++cache_hits_;
      return json::parse(*hit).get<std::string>();
    }
  }
  std::string text =
      with_retries([&] { return transport_->chat(route, req); }, "chat[" + req.role_name + "]");
  if (text.find_first_not_of(" \t\r\n") == std::string::npos)
    throw EmptyOutputError("chat[" + req.role_name + "]: empty completion");
  if (config_.cache_enabled) cache_.put(key, json(text).dump());
  return text;
}

Embedding Backend::embed(const std::string& text) {
  if (text.empty()) throw ValidationError("embed: text must be non-empty");
  ++embed_requests_;
  const Route& route = config_.route_for(config_.embedding_role);
  const std::string key = embed_cache_key(text);
  auto to_vector = [](const std::vector<double>& values) {
    return Embedding(Eigen::Map<const Embedding>(values.data(), static_cast<Eigen::Index>(values.size())));
  };
  if (config_.cache_enabled) {
    if (auto hit = cache_.get(key)) {
      ++cache_hits_;
      return to_vector(json::parse(*hit).get<std::vector<double>>());
    }
  }
  std::vector<double> values = with_retries(
      [&] { return transport_->embed(route, text, config_.embedding_dim); }, "embed");
  if (static_cast<int>(values.size()) != config_.embedding_dim)
    throw DimensionError(config_.embedding_dim, static_cast<int>(values.size()));
  Embedding v = to_vector(values);
  if (!all_finite(v)) throw PipelineError("embed: provider returned non-finite values");
  if (config_.cache_enabled) cache_.put(key, json(values).dump());
  return v;
}

BackendStats Backend::stats() const {
  return {chat_requests_.load(), embed_requests_.load(), transport_calls_.load(),
          network_calls_.load(), cache_hits_.load(), retries_.load()};
}

}  // namespace macr
