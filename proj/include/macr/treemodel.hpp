#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "macr/error.hpp"

namespace macr {

// Ordered risk levels, index 0 is the lowest risk.
class RiskLabelSet {
 public:
  explicit RiskLabelSet(std::vector<std::string> labels);

  // "L0".."L{count-1}".
  static RiskLabelSet generic(std::size_t count = 4);
  // Comma separated names, e.g. "none,low,moderate,severe".
  static RiskLabelSet parse(std::string_view comma_separated);

  std::size_t count() const { return labels_.size(); }
  const std::string& name(std::size_t index) const { return labels_.at(index); }
  const std::vector<std::string>& names() const { return labels_; }
  std::optional<std::size_t> index_of(std::string_view name) const;
  std::string joined(std::string_view sep = ",") const;

  bool operator==(const RiskLabelSet&) const = default;

 private:
  std::vector<std::string> labels_;
};

struct CommentNode {
  std::string id;
  std::string author_ref;  // opaque, may be empty
  std::string text;
  std::vector<CommentNode> children;
  int depth = 1;

  bool operator==(const CommentNode&) const = default;
};

struct ConversationTree {
  std::string id;
  std::string post_text;
  std::vector<CommentNode> root_comments;
  std::optional<std::size_t> gold_label;
  std::size_t node_count = 1;

  bool operator==(const ConversationTree&) const = default;
};

struct Dataset {
  std::vector<ConversationTree> trees;
  RiskLabelSet label_set = RiskLabelSet::generic();
  std::string name;

  bool operator==(const Dataset&) const = default;
};

// Malformed dataset record. line is 1-based, 0 when not tied to a line.
class DatasetError : public ValidationError {
 public:
  DatasetError(std::size_t line, std::string field, const std::string& what);
  std::size_t line() const { return line_; }
  const std::string& field() const { return field_; }
  const std::string& detail() const { return detail_; }

 private:
  std::size_t line_;
  std::string field_;
  std::string detail_;
};

struct RenderLimits {
  int max_depth = 6;
  int max_nodes = 60;
};

inline constexpr std::string_view kTruncatedMarker = "[truncated]";

// Flat comment as it appears in a record, before tree assembly.
struct FlatComment {
  std::string id;
  std::optional<std::string> parent_id;  // nullopt: reply to the post
  std::string text;
  std::string author_ref;
};

// Builds a validated tree from flat comments. Throws DatasetError on
// duplicate ids, unknown parents and cycles (line is left 0).
ConversationTree build_tree(std::string id, std::string post_text,
                            const std::vector<FlatComment>& comments,
                            std::optional<std::size_t> gold_label);

ConversationTree parse_record(std::string_view json_line, const RiskLabelSet& labels,
                              std::size_t line_number = 0);
std::string serialize_record(const ConversationTree& tree, const RiskLabelSet& labels);

Dataset parse_dataset(std::istream& in, const RiskLabelSet& labels, std::string name = {});
Dataset parse_dataset(const std::filesystem::path& path, const RiskLabelSet& labels);
void write_dataset(std::ostream& out, const Dataset& dataset);

// Visits every comment depth-first, pre-order. The post is not visited.
template <typename Visitor>
void visit_depth_first(const ConversationTree& tree, Visitor&& visit);

std::size_t count_nodes(const ConversationTree& tree);
int max_depth(const ConversationTree& tree);

// Deterministic prompt rendering. Nodes are admitted breadth-first until
// max_nodes (post included) and printed depth-first with two spaces of
// indentation per level. "[truncated]" is appended when anything was dropped.
std::string render_tree(const ConversationTree& tree, const RenderLimits& limits = {});

struct Fold {
  Dataset train;
  Dataset test;
};

// Stratified k-fold split, deterministic in seed.
std::vector<Fold> kfold_split(const Dataset& dataset, int k, std::uint64_t seed);

// ---------------------------------------------------------------------------

namespace detail {
template <typename Visitor>
void visit_comment(const CommentNode& node, Visitor& visit) {
  visit(node);
  for (const auto& child : node.children) visit_comment(child, visit);
}
}  // namespace detail

template <typename Visitor>
void visit_depth_first(const ConversationTree& tree, Visitor&& visit) {
  for (const auto& c : tree.root_comments) detail::visit_comment(c, visit);
}

}  // namespace macr
