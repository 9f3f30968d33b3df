#pragma once

#include <atomic>
#include <filesystem>
#include <fstream>
#include <functional>
#include <memory>
#include <sstream>
#include <string>

#include "macr/backend.hpp"
#include "macr/config.hpp"
#include "macr/stores.hpp"
#include "macr/treemodel.hpp"

namespace testing {

inline std::filesystem::path fixture(const std::string& name) { return std::filesystem::path(MACR_FIXTURES_DIR) / name; }
inline std::filesystem::path golden(const std::string& name) { return std::filesystem::path(MACR_GOLDEN_DIR) / name; }

inline std::filesystem::path scratch(const std::string& name) {
  auto dir = std::filesystem::path(MACR_SCRATCH_DIR) / name;
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

inline std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// Set MACR_UPDATE_GOLDEN=1 to rewrite a missing or stale golden file.
inline bool update_golden() { return std::getenv("MACR_UPDATE_GOLDEN") != nullptr; }

inline std::string check_golden(const std::string& name, const std::string& actual) {
  const auto path = golden(name);
  if (update_golden()) {
    std::ofstream(path, std::ios::binary) << actual;
  }
  return slurp(path);
}

inline macr::Dataset fixture_dataset() {
  return macr::parse_dataset(fixture("threads12.jsonl"), macr::RiskLabelSet::generic());
}

inline std::unique_ptr<macr::Backend> make_backend(macr::ChatResponder responder,
                                                   std::shared_ptr<macr::StubTransport>* keep = nullptr) {
  auto cfg = macr::PipelineConfig::defaults();
  auto transport = std::make_shared<macr::StubTransport>(std::move(responder));
  if (keep) *keep = transport;
  return std::make_unique<macr::Backend>(cfg.backend, transport);
}

inline std::unique_ptr<macr::Backend> scripted_backend(std::shared_ptr<macr::StubTransport>* keep = nullptr) {
  return make_backend(macr::make_scripted_responder(macr::RiskLabelSet::generic()), keep);
}

inline macr::ConversationTree simple_tree(const std::string& id, const std::string& post,
                                          std::optional<std::size_t> label = std::nullopt) {
  return macr::build_tree(id, post, {{id + "-a", std::nullopt, "first reply", ""}}, label);
}

}  // namespace testing
