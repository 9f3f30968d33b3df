#pragma once

#include <atomic>
#include <chrono>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <semaphore>
#include <string>
#include <unordered_map>
#include <vector>

#include "macr/embedding.hpp"
#include "macr/error.hpp"

namespace macr {

struct ChatRequest {
  std::string role_name;
  std::string system_prompt;
  std::string user_prompt;
  double temperature = 0.2;
  std::optional<std::int64_t> seed_hint;
  int max_output_tokens = 512;
};

struct Route {
  std::string endpoint;     // base URL, e.g. https://api.example.com/v1
  std::string model;
  std::string api_key_env;  // empty: no Authorization header

  bool operator==(const Route&) const = default;
};

struct RetryPolicy {
  int max_attempts = 3;
  std::chrono::milliseconds backoff{500};
  double backoff_multiplier = 2.0;
};

struct BackendConfig {
  std::map<std::string, Route> routes;  // role name -> route
  std::string embedding_role = "embedding";
  int embedding_dim = 1024;
  bool cache_enabled = true;
  std::filesystem::path cache_dir;  // empty: in-memory cache only
  RetryPolicy retry;
  std::chrono::seconds timeout{120};
  int max_inflight = 4;

  // Throws ValidationError naming the role when no route exists.
  const Route& route_for(const std::string& role) const;
};

// Transport-level failure. transient() failures are retried by Backend.
class TransportError : public PipelineError {
 public:
  TransportError(const std::string& what, bool transient, int status = 0)
      : PipelineError(what), transient_(transient), status_(status) {}
  bool transient() const { return transient_; }
  int status() const { return status_; }  // 0 when no HTTP status was received

 private:
  bool transient_;
  int status_;
};

// The provider answered with a non-success HTTP status.
class ProviderError : public PipelineError {
 public:
  ProviderError(const std::string& what, int status) : PipelineError(what), status_(status) {}
  int status() const { return status_; }

 private:
  int status_;
};

class EmptyOutputError : public PipelineError {
 public:
  using PipelineError::PipelineError;
};

class DimensionError : public PipelineError {
 public:
  DimensionError(int expected, int actual);
  int expected() const { return expected_; }
  int actual() const { return actual_; }

 private:
  int expected_;
  int actual_;
};

class Transport {
 public:
  virtual ~Transport() = default;
  virtual std::string chat(const Route& route, const ChatRequest& req) = 0;
  virtual std::vector<double> embed(const Route& route, const std::string& text, int dim) = 0;
  // False for transports that never touch the network.
  virtual bool is_network() const = 0;
};

using ChatResponder = std::function<std::string(const ChatRequest&)>;

// Offline transport. Chat replies come from a scripted responder; embeddings
// are hash-seeded unit vectors.
class StubTransport : public Transport {
 public:
  explicit StubTransport(ChatResponder responder) : responder_(std::move(responder)) {}

  std::string chat(const Route& route, const ChatRequest& req) override;
  std::vector<double> embed(const Route& route, const std::string& text, int dim) override;
  bool is_network() const override { return false; }

  std::size_t chat_calls() const { return chat_calls_; }
  std::size_t embed_calls() const { return embed_calls_; }

 private:
  ChatResponder responder_;
  std::atomic<std::size_t> chat_calls_{0};
  std::atomic<std::size_t> embed_calls_{0};
};

// OpenAI-compatible HTTP(S) transport: POST {endpoint}/chat/completions and
// POST {endpoint}/embeddings.
class HttpTransport : public Transport {
 public:
  explicit HttpTransport(std::chrono::seconds timeout) : timeout_(timeout) {}

  std::string chat(const Route& route, const ChatRequest& req) override;
  std::vector<double> embed(const Route& route, const std::string& text, int dim) override;
  bool is_network() const override { return true; }

 private:
  std::chrono::seconds timeout_;
};

std::string sha256_hex(std::string_view bytes);

// Content-addressed response cache: <dir>/<first-2-hex>/<hash>.json holding
// {"digest": hash, "response": ...}. Prompts are never written to disk.
class ResponseCache {
 public:
  explicit ResponseCache(std::filesystem::path dir = {}) : dir_(std::move(dir)) {}

  std::optional<std::string> get(const std::string& digest);
  void put(const std::string& digest, const std::string& response_json);
  std::filesystem::path path_for(const std::string& digest) const;

 private:
  std::filesystem::path dir_;
  std::mutex mu_;
  std::unordered_map<std::string, std::string> memory_;
};

struct CacheStats {
  std::size_t entries = 0;
  std::uintmax_t bytes = 0;
};
CacheStats cache_stats(const std::filesystem::path& dir);
std::size_t cache_clear(const std::filesystem::path& dir);

struct BackendStats {
  std::size_t chat_requests = 0;
  std::size_t embed_requests = 0;
  std::size_t transport_calls = 0;
  std::size_t network_calls = 0;
  std::size_t cache_hits = 0;
  std::size_t retries = 0;
};

// Routing, caching and retries in front of a Transport. Thread safe.
class Backend {
 public:
  Backend(BackendConfig config, std::shared_ptr<Transport> transport);

  std::string chat(const ChatRequest& req);
  Embedding embed(const std::string& text);

  // Digest of (model name, full request payload).
  std::string chat_cache_key(const ChatRequest& req) const;
  std::string embed_cache_key(const std::string& text) const;

  BackendStats stats() const;
  const BackendConfig& config() const { return config_; }

 private:
  template <typename Fn>
  auto with_retries(Fn&& call, const std::string& what) -> decltype(call());

  BackendConfig config_;
  std::shared_ptr<Transport> transport_;
  ResponseCache cache_;
  std::counting_semaphore<1024> inflight_;

  std::atomic<std::size_t> chat_requests_{0};
  std::atomic<std::size_t> embed_requests_{0};
  std::atomic<std::size_t> transport_calls_{0};
  std::atomic<std::size_t> network_calls_{0};
  std::atomic<std::size_t> cache_hits_{0};
  std::atomic<std::size_t> retries_{0};
};

}  // namespace macr
