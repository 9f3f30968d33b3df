#include "macr/treemodel.hpp"

#include <algorithm>
#include <deque>
#include <fstream>
#include <functional>
#include <istream>
#include <ostream>
#include <set>
#include <sstream>
#include <unordered_map>
#include <unordered_set>

#include <json.hpp>

#include "macr/seeds.hpp"

namespace macr {

using json = nlohmann::json;
using ordered_json = nlohmann::ordered_json;

RiskLabelSet::RiskLabelSet(std::vector<std::string> labels) : labels_(std::move(labels)) {
  if (labels_.size() < 2) throw ValidationError("label set needs at least 2 labels");
  std::set<std::string> seen;
  for (const auto& l : labels_) {
    if (l.empty()) throw ValidationError("label names must be non-empty");
    if (!seen.insert(l).second) throw ValidationError("duplicate label name '" + l + "'");
  }
}

RiskLabelSet RiskLabelSet::generic(std::size_t count) {
  std::vector<std::string> names;
  for (std::size_t i = 0; i < count; ++i) names.push_back("L" + std::to_string(i));
  return RiskLabelSet(std::move(names));
}

RiskLabelSet RiskLabelSet::parse(std::string_view comma_separated) {
  std::vector<std::string> names;
  std::string current;
  auto flush = [&] {
    auto b = current.find_first_not_of(" \t");
    auto e = current.find_last_not_of(" \t");
    names.push_back(b == std::string::npos ? std::string{} : current.substr(b, e - b + 1));
    current.clear();
  };
  for (char c : comma_separated) {
    if (c == ',') flush();
    else current.push_back(c);
  }
  flush();
  return RiskLabelSet(std::move(names));
}

std::optional<std::size_t> RiskLabelSet::index_of(std::string_view name) const {
  for (std::size_t i = 0; i < labels_.size(); ++i)
    if (labels_[i] == name) return i;
  return std::nullopt;
}

std::string RiskLabelSet::joined(std::string_view sep) const {
  std::string out;
  for (std::size_t i = 0; i < labels_.size(); ++i) {
    if (i) out += sep;
    out += labels_[i];
  }
  return out;
}

DatasetError::DatasetError(std::size_t line, std::string field, const std::string& what)
    : ValidationError((line ? "line " + std::to_string(line) + ": " : std::string{}) +
                      (field.empty() ? std::string{} : "field '" + field + "': ") + what),
      line_(line),
      field_(std::move(field)),
      detail_(what) {}

namespace {

std::string one_line(std::string_view text) {
  std::string out(text);
  std::replace(out.begin(), out.end(), '\n', ' ');
  std::replace(out.begin(), out.end(), '\r', ' ');
  return out;
}

}  // namespace

ConversationTree build_tree(std::string id, std::string post_text,
                            const std::vector<FlatComment>& comments,
                            std::optional<std::size_t> gold_label) {
  if (id.empty()) throw DatasetError(0, "id", "tree id must be non-empty");
  if (post_text.empty()) throw DatasetError(0, "post", "post text must be non-empty");

  std::unordered_map<std::string, std::size_t> index;
  for (std::size_t i = 0; i < comments.size(); ++i) {
    const auto& c = comments[i];
    if (c.id.empty()) throw DatasetError(0, "comments.id", "comment id must be non-empty");
    if (c.id == id || !index.emplace(c.id, i).second)
      throw DatasetError(0, "comments.id", "duplicate node id '" + c.id + "'");
  }

  std::vector<std::vector<std::size_t>> children(comments.size());
  std::vector<std::size_t> roots;
  for (std::size_t i = 0; i < comments.size(); ++i) {
    const auto& parent = comments[i].parent_id;
    if (!parent || *parent == id) {
      roots.push_back(i);
      continue;
    }
    if (*parent == comments[i].id)
      throw DatasetError(0, "comments.parent_id", "cycle: comment '" + comments[i].id +
                                                      "' is its own parent");
    auto it = index.find(*parent);
    if (it == index.end())
      throw DatasetError(0, "comments.parent_id", "comment '" + comments[i].id +
                                                      "' references unknown parent '" +
                                                      *parent + "'");
    children[it->second].push_back(i);
  }

  std::vector<bool> reached(comments.size(), false);
  std::function<CommentNode(std::size_t, int)> build = [&](std::size_t i, int depth) {
    reached[i] = true;
    CommentNode node{comments[i].id, comments[i].author_ref, comments[i].text, {}, depth};
    node.children.reserve(children[i].size());
    for (auto c : children[i]) node.children.push_back(build(c, depth + 1));
    return node;
  };

  ConversationTree tree;
  tree.id = std::move(id);
  tree.post_text = std::move(post_text);
  tree.gold_label = gold_label;
  for (auto r : roots) tree.root_comments.push_back(build(r, 1));
  for (std::size_t i = 0; i < comments.size(); ++i)
    if (!reached[i])
      throw DatasetError(0, "comments.parent_id",
                         "cycle: comment '" + comments[i].id + "' is not reachable from the post");
  tree.node_count = 1 + comments.size();
  return tree;
}

ConversationTree parse_record(std::string_view json_line, const RiskLabelSet& labels,
                              std::size_t line_number) {
  json rec;
  try {
    rec = json::parse(json_line);
  } catch (const json::parse_error& e) {
    throw DatasetError(line_number, "", std::string("invalid JSON: ") + e.what());
  }
  if (!rec.is_object()) throw DatasetError(line_number, "", "record must be a JSON object");

  auto require_string = [&](const json& obj, const char* key, const std::string& field) {
    auto it = obj.find(key);
    if (it == obj.end() || !it->is_string())
      throw DatasetError(line_number, field, "missing or not a string");
    return it->get<std::string>();
  };

  std::string id = require_string(rec, "id", "id");
  std::string post = require_string(rec, "post", "post");

  std::vector<FlatComment> flat;
  if (auto it = rec.find("comments"); it != rec.end()) {
    if (!it->is_array()) throw DatasetError(line_number, "comments", "must be an array");
    for (std::size_t i = 0; i < it->size(); ++i) {
      const auto& c = (*it)[i];
      const std::string prefix = "comments[" + std::to_string(i) + "]";
      if (!c.is_object()) throw DatasetError(line_number, prefix, "must be an object");
      FlatComment fc;
      fc.id = require_string(c, "id", prefix + ".id");
      fc.text = require_string(c, "text", prefix + ".text");
      if (auto p = c.find("parent_id"); p != c.end() && !p->is_null()) {
        if (!p->is_string()) throw DatasetError(line_number, prefix + ".parent_id", "must be string or null");
        fc.parent_id = p->get<std::string>();
      }
      if (auto a = c.find("author"); a != c.end() && !a->is_null()) {
        if (!a->is_string()) throw DatasetError(line_number, prefix + ".author", "must be a string");
        fc.author_ref = a->get<std::string>();
      }
      flat.push_back(std::move(fc));
    }
  }

  std::optional<std::size_t> gold;
  if (auto it = rec.find("label"); it != rec.end() && !it->is_null()) {
    if (!it->is_string()) throw DatasetError(line_number, "label", "must be a string or null");
    auto name = it->get<std::string>();
    gold = labels.index_of(name);
    if (!gold)
      throw DatasetError(line_number, "label",
                         "unknown label '" + name + "' (expected one of " + labels.joined() + ")");
  }

  try {
    return build_tree(std::move(id), std::move(post), flat, gold);
  } catch (const DatasetError& e) {
    if (e.line() != 0 || line_number == 0) throw;
    throw DatasetError(line_number, e.field(), e.detail());
  }
}

std::string serialize_record(const ConversationTree& tree, const RiskLabelSet& labels) {
  ordered_json rec;
  rec["id"] = tree.id;
  rec["post"] = tree.post_text;
  ordered_json comments = ordered_json::array();
  std::function<void(const CommentNode&, const std::string*)> emit =
      [&](const CommentNode& node, const std::string* parent) {
        ordered_json c;
        c["id"] = node.id;
        c["parent_id"] = parent ? ordered_json(*parent) : ordered_json(nullptr);
        c["text"] = node.text;
        if (!node.author_ref.empty()) c["author"] = node.author_ref;
        comments.push_back(std::move(c));
        for (const auto& child : node.children) emit(child, &node.id);
      };
  for (const auto& c : tree.root_comments) emit(c, nullptr);
  rec["comments"] = std::move(comments);
  if (tree.gold_label) rec["label"] = labels.name(*tree.gold_label);
  return rec.dump();
}

Dataset parse_dataset(std::istream& in, const RiskLabelSet& labels, std::string name) {
  Dataset ds;
  ds.label_set = labels;
  ds.name = std::move(name);
  std::unordered_set<std::string> ids;
  std::string line;
  std::size_t line_number = 0;
  while (std::getline(in, line)) {
    ++line_number;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    auto tree = parse_record(line, labels, line_number);
    if (!ids.insert(tree.id).second)
      throw DatasetError(line_number, "id", "duplicate tree id '" + tree.id + "'");
    ds.trees.push_back(std::move(tree));
  }
  return ds;
}

Dataset parse_dataset(const std::filesystem::path& path, const RiskLabelSet& labels) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open dataset file " + path.string());
  return parse_dataset(in, labels, path.stem().string());
}

void write_dataset(std::ostream& out, const Dataset& dataset) {
  for (const auto& t : dataset.trees) out << serialize_record(t, dataset.label_set) << '\n';
}

std::size_t count_nodes(const ConversationTree& tree) {
  std::size_t n = 1;
  visit_depth_first(tree, [&](const CommentNode&) { ++n; });
  return n;
}

int max_depth(const ConversationTree& tree) {
  int d = 0;
  visit_depth_first(tree, [&](const CommentNode& c) { d = std::max(d, c.depth); });
  return d;
}

std::string render_tree(const ConversationTree& tree, const RenderLimits& limits) {
  const int max_depth_limit = std::max(1, limits.max_depth);
  const std::size_t max_nodes = static_cast<std::size_t>(std::max(1, limits.max_nodes));

  std::unordered_set<const CommentNode*> admitted;
  std::size_t used = 1;  // the post
  std::deque<const CommentNode*> queue;
  for (const auto& c : tree.root_comments) queue.push_back(&c);
  while (!queue.empty() && used < max_nodes) {
    const CommentNode* node = queue.front();
    queue.pop_front();
    if (node->depth > max_depth_limit) continue;
    admitted.insert(node);
    ++used;
    for (const auto& child : node->children) queue.push_back(&child);
  }

  std::string out = "[POST] " + one_line(tree.post_text);
  std::function<void(const CommentNode&)> print = [&](const CommentNode& node) {
    if (!admitted.count(&node)) return;
    out += '\n';
    out.append(static_cast<std::size_t>(2 * node.depth), ' ');
    out += "[COMMENT] ";
    out += one_line(node.text);
    for (const auto& child : node.children) print(child);
  };
  for (const auto& c : tree.root_comments) print(c);
  if (used < tree.node_count) {
    out += '\n';
    out += kTruncatedMarker;
  }
  return out;
}

std::vector<Fold> kfold_split(const Dataset& dataset, int k, std::uint64_t seed) {
  if (k < 2) throw ValidationError("kfold_split: k must be >= 2");
  if (dataset.trees.size() < static_cast<std::size_t>(k))
    throw ValidationError("kfold_split: dataset has " + std::to_string(dataset.trees.size()) +
                          " trees, fewer than k=" + std::to_string(k));

  std::vector<std::vector<std::size_t>> by_label(dataset.label_set.count());
  for (std::size_t i = 0; i < dataset.trees.size(); ++i) {
    const auto& t = dataset.trees[i];
    if (!t.gold_label)
      throw ValidationError("kfold_split: tree '" + t.id + "' has no gold label");
    by_label[*t.gold_label].push_back(i);
  }

  Rng rng(seed);
  std::vector<int> fold_of(dataset.trees.size(), 0);
  std::size_t dealt = 0;
  for (auto& group : by_label) {
    for (std::size_t i = group.size(); i > 1; --i) std::swap(group[i - 1], group[rng.below(i)]);
    for (auto idx : group) fold_of[idx] = static_cast<int>(dealt++ % static_cast<std::size_t>(k));
  }

  std::vector<Fold> folds(static_cast<std::size_t>(k));
  for (int f = 0; f < k; ++f) {
    auto& fold = folds[static_cast<std::size_t>(f)];
    fold.train.label_set = fold.test.label_set = dataset.label_set;
    fold.train.name = dataset.name + "/fold" + std::to_string(f) + "/train";
    fold.test.name = dataset.name + "/fold" + std::to_string(f) + "/test";
    for (std::size_t i = 0; i < dataset.trees.size(); ++i)
      (fold_of[i] == f ? fold.test : fold.train).trees.push_back(dataset.trees[i]);
  }
  return folds;
}

}  // namespace macr
