#include "macr/prompts.hpp"

#include <fstream>
#include <sstream>

namespace macr {

namespace detail {
const std::map<std::string, std::string>& prompt_assets();
}

namespace {

bool placeholder_char(char c) { return (c >= 'a' && c <= 'z') || c == '_'; }

// Calls on_text for literal runs and on_name for each {name}.
template <typename OnText, typename OnName>
void scan(std::string_view text, OnText&& on_text, OnName&& on_name) {
  std::size_t i = 0;
  std::size_t literal_start = 0;
  while (i < text.size()) {
    if (text[i] == '{') {
      std::size_t j = i + 1;
      while (j < text.size() && placeholder_char(text[j])) ++j;
      if (j > i + 1 && j < text.size() && text[j] == '}') {
        on_text(text.substr(literal_start, i - literal_start));
        on_name(text.substr(i + 1, j - i - 1));
        i = j + 1;
        literal_start = i;
        continue;
      }
    }
    ++i;
  }
  on_text(text.substr(literal_start));
}

std::string trim_newlines(std::string s) {
  while (!s.empty() && (s.front() == '\n' || s.front() == '\r')) s.erase(s.begin());
  while (!s.empty() && (s.back() == '\n' || s.back() == '\r' || s.back() == ' ')) s.pop_back();
  return s;
}

}  // namespace

std::set<std::string> PromptTemplate::placeholders() const {
  std::set<std::string> names;
  auto add = [&](std::string_view n) { names.emplace(n); };
  auto ignore = [](std::string_view) {};
  scan(system, ignore, add);
  scan(user, ignore, add);
  return names;
}

void PromptTemplate::require(std::initializer_list<std::string_view> names) const {
  const auto have = placeholders();
  std::string missing;
  for (auto n : names)
    if (!have.count(std::string(n))) missing += (missing.empty() ? "" : ", ") + ("{" + std::string(n) + "}");
  if (!missing.empty())
    throw ValidationError("prompt template '" + role + "' (" + source + ") is missing placeholder(s) " +
                          missing);
}

PromptTemplate parse_template(std::string_view text, std::string role, std::string source) {
  PromptTemplate t;
  t.role = std::move(role);
  t.source = std::move(source);
  const auto sys = text.find("[system]");
  const auto usr = text.find("[user]");
  if (usr == std::string_view::npos) {
    t.user = trim_newlines(std::string(text));
  } else {
    if (sys != std::string_view::npos && sys < usr)
      t.system = trim_newlines(std::string(text.substr(sys + 8, usr - sys - 8)));
    t.user = trim_newlines(std::string(text.substr(usr + 6)));
  }
  if (t.user.empty()) throw ValidationError("prompt template '" + t.role + "' has an empty [user] section");
  return t;
}

PromptTemplate load_template(const std::filesystem::path& path, std::string role) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open prompt template " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_template(buf.str(), std::move(role), path.string());
}

PromptTemplate builtin_template(std::string_view role) {
  const auto& assets = detail::prompt_assets();
  auto it = assets.find(std::string(role));
  if (it == assets.end()) throw ValidationError("no builtin prompt template for role '" + std::string(role) + "'");
  return parse_template(it->second, std::string(role), "builtin:v1");
}

std::string fill_placeholders(std::string_view text, const std::map<std::string, std::string>& values) {
  std::string out;
  out.reserve(text.size());
  scan(
      text, [&](std::string_view lit) { out += lit; },
      [&](std::string_view name) {
        auto it = values.find(std::string(name));
        if (it == values.end())
          throw ValidationError("no value for prompt placeholder {" + std::string(name) + "}");
        out += it->second;
      });
  return out;
}

PromptSet PromptSet::builtin() {
  PromptSet set;
  for (auto role : {roles::kAnalyst, roles::kCritic, roles::kEmpiricist, roles::kSynthesizer,
                    roles::kDecision, roles::kDecisionTreeOnly, roles::kDirect})
    set.templates.emplace(std::string(role), builtin_template(role));
  return set;
}

const PromptTemplate& PromptSet::at(std::string_view role) const {
  auto it = templates.find(role);
  if (it == templates.end()) throw ValidationError("no prompt template for role '" + std::string(role) + "'");
  return it->second;
}

void PromptSet::validate(bool synthesizer_sees_tree) const {
  at(roles::kAnalyst).require({"tree", "nonce"});
  at(roles::kCritic).require({"tree", "analyst", "nonce"});
  at(roles::kEmpiricist).require({"tree", "analyst", "nonce"});
  if (synthesizer_sees_tree)
    at(roles::kSynthesizer).require({"tree", "analyst", "critic", "empiricist", "nonce"});
  else
    at(roles::kSynthesizer).require({"analyst", "critic", "empiricist", "nonce"});
  at(roles::kDecision).require({"labels", "demonstrations", "tree", "inference", "nonce"});
  at(roles::kDecisionTreeOnly).require({"labels", "demonstrations", "tree", "nonce"});
  at(roles::kDirect).require({"labels", "inference", "nonce"});
}

}  // namespace macr
