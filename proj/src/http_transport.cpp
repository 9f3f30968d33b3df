#include <cstdlib>

// Before httplib: resolv.h defines a _res macro that breaks Eigen.
#include "macr/backend.hpp"

#include <httplib.h>
#include <json.hpp>

namespace macr {

using json = nlohmann::json;

namespace {

struct ParsedUrl {
  std::string scheme_host_port;
  std::string path_prefix;
};

ParsedUrl parse_endpoint(const std::string& endpoint) {
  const auto scheme_end = endpoint.find("://");
  if (scheme_end == std::string::npos)
    throw TransportError("endpoint '" + endpoint + "' must start with http:// or https://", false);
  const auto path_start = endpoint.find('/', scheme_end + 3);
  ParsedUrl url;
  url.scheme_host_port = endpoint.substr(0, path_start);
  if (path_start != std::string::npos) url.path_prefix = endpoint.substr(path_start);
  while (!url.path_prefix.empty() && url.path_prefix.back() == '/') url.path_prefix.pop_back();
  return url;
}

bool transient_status(int status) {
  return status == 408 || status == 409 || status == 429 || status >= 500;
}

json post_json(const Route& route, const std::string& path, const json& body,
               std::chrono::seconds timeout) {
  const ParsedUrl url = parse_endpoint(route.endpoint);
  httplib::Client client(url.scheme_host_port);
  client.set_connection_timeout(timeout);
  client.set_read_timeout(timeout);
  client.set_write_timeout(timeout);

  httplib::Headers headers;
  if (!route.api_key_env.empty()) {
    const char* key = std::getenv(route.api_key_env.c_str());
    if (!key || !*key)
      throw TransportError("environment variable " + route.api_key_env + " is not set", false);
    headers.emplace("Authorization", std::string("Bearer ") + key);
  }

  auto res = client.Post(url.path_prefix + path, headers, body.dump(), "application/json");
  if (!res) throw TransportError("HTTP request failed: " + httplib::to_string(res.error()), true);
  if (res->status < 200 || res->status >= 300)
    throw TransportError("HTTP status " + std::to_string(res->status), transient_status(res->status),
                         res->status);
  try {
    return json::parse(res->body);
  } catch (const json::parse_error&) {
    throw TransportError("provider returned a non-JSON body", false);
  }
}

}  // namespace

std::string HttpTransport::chat(const Route& route, const ChatRequest& req) {
  json body;
  body["model"] = route.model;
  body["messages"] = json::array();
  if (!req.system_prompt.empty())
    body["messages"].push_back({{"role", "system"}, {"content", req.system_prompt}});
  body["messages"].push_back({{"role", "user"}, {"content", req.user_prompt}});
  body["temperature"] = req.temperature;
  body["max_tokens"] = req.max_output_tokens;
  if (req.seed_hint) body["seed"] = *req.seed_hint;

  const json reply = post_json(route, "/chat/completions", body, timeout_);
  try {
    const auto& content = reply.at("choices").at(0).at("message").at("content");
    return content.is_null() ? std::string{} : content.get<std::string>();
  } catch (const json::exception&) {
    throw TransportError("malformed chat completion response", false);
  }
}

std::vector<double> HttpTransport::embed(const Route& route, const std::string& text, int) {
  json body;
  body["model"] = route.model;
  body["input"] = json::array({text});
  const json reply = post_json(route, "/embeddings", body, timeout_);
  try {
    return reply.at("data").at(0).at("embedding").get<std::vector<double>>();
  } catch (const json::exception&) {
    throw TransportError("malformed embeddings response", false);
  }
}

}  // namespace macr
