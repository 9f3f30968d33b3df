#pragma once

#include <filesystem>
#include <initializer_list>
#include <map>
#include <set>
#include <string>
#include <string_view>

#include "macr/error.hpp"

namespace macr {

// Role names used for routing and template lookup.
namespace roles {
inline constexpr std::string_view kAnalyst = "analyst";
inline constexpr std::string_view kCritic = "critic";
inline constexpr std::string_view kEmpiricist = "empiricist";
inline constexpr std::string_view kSynthesizer = "synthesizer";
inline constexpr std::string_view kDecision = "decision";
inline constexpr std::string_view kDecisionTreeOnly = "decision_tree_only";
inline constexpr std::string_view kDirect = "direct";
inline constexpr std::string_view kEmbedding = "embedding";
}  // namespace roles

// A template file has a "[system]" section and a "[user]" section. Placeholders
// are written {name}; only lower-case identifiers are treated as placeholders.
struct PromptTemplate {
  std::string role;
  std::string system;
  std::string user;
  std::string source;  // file path or "builtin:v1"

  std::set<std::string> placeholders() const;
  // Throws ValidationError listing any name not present in the template.
  void require(std::initializer_list<std::string_view> names) const;
};

PromptTemplate parse_template(std::string_view text, std::string role, std::string source);
PromptTemplate load_template(const std::filesystem::path& path, std::string role);
PromptTemplate builtin_template(std::string_view role);

// Replaces every {name} with values.at(name). A placeholder without a value
// is an error.
std::string fill_placeholders(std::string_view text, const std::map<std::string, std::string>& values);

struct PromptSet {
  std::map<std::string, PromptTemplate, std::less<>> templates;

  static PromptSet builtin();
  const PromptTemplate& at(std::string_view role) const;
  // Startup check of the placeholders every role needs.
  void validate(bool synthesizer_sees_tree) const;
};

}  // namespace macr
