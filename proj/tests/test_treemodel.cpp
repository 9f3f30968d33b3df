#include <doctest.h>

#include <map>
#include <set>
#include <sstream>

#include "macr/treemodel.hpp"
#include "support.hpp"

#include <json.hpp>

using namespace macr;

namespace {

Dataset parse_text(const std::string& text, const RiskLabelSet& labels = RiskLabelSet::generic()) {
  std::istringstream in(text);
  return parse_dataset(in, labels);
}

ConversationTree chain(const std::string& id, int depth) {
  std::vector<FlatComment> flat;
  std::optional<std::string> parent;
  for (int d = 1; d <= depth; ++d) {
    const std::string cid = id + "-" + std::to_string(d);
    flat.push_back({cid, parent, "depth " + std::to_string(d), ""});
    parent = cid;
  }
  return build_tree(id, "root post", flat, std::nullopt);
}

Dataset labelled(int per_label, int labels) {
  Dataset ds;
  for (int l = 0; l < labels; ++l)
    for (int i = 0; i < per_label; ++i)
      ds.trees.push_back(testing::simple_tree("t" + std::to_string(l) + "_" + std::to_string(i), "post",
                                              static_cast<std::size_t>(l)));
  return ds;
}

}  // namespace

TEST_CASE("label set names and parsing") {
  const auto g = RiskLabelSet::generic();
  CHECK(g.count() == 4);
  CHECK(g.joined() == "L0,L1,L2,L3");
  const auto named = RiskLabelSet::parse("none, low,moderate ,severe");
  CHECK(named.index_of("moderate") == 2);
  CHECK_FALSE(named.index_of("high").has_value());
  CHECK_THROWS_AS(RiskLabelSet::parse("a,a"), ValidationError);
  CHECK_THROWS_AS(RiskLabelSet::parse("only"), ValidationError);
  CHECK_THROWS_AS(RiskLabelSet::parse("a,,b"), ValidationError);
}

TEST_CASE("one record with two flat comments counts three nodes") {
  const auto ds = parse_text(
      R"({"id":"x","post":"p","comments":[{"id":"a","parent_id":null,"text":"one"},{"id":"b","parent_id":"a","text":"two"}]})"
      "\n");
  REQUIRE(ds.trees.size() == 1);
  CHECK(ds.trees[0].node_count == 3);
  CHECK(count_nodes(ds.trees[0]) == 3);
  CHECK(max_depth(ds.trees[0]) == 2);
  CHECK(ds.trees[0].root_comments[0].children[0].depth == 2);
}

TEST_CASE("a comment that is its own parent is a cycle") {
  try {
    parse_text(R"({"id":"x","post":"p","comments":[{"id":"a","parent_id":"a","text":"loop"}]})" "\n");
    FAIL("expected a cycle error");
  } catch (const DatasetError& e) {
    CHECK(e.line() == 1);
    CHECK(std::string(e.what()).find("cycle") != std::string::npos);
  }
}

TEST_CASE("longer cycles, duplicates and unknown parents are rejected") {
  CHECK_THROWS_AS(build_tree("x", "p", {{"a", "b", "1", ""}, {"b", "a", "2", ""}}, std::nullopt), DatasetError);
  CHECK_THROWS_AS(build_tree("x", "p", {{"a", std::nullopt, "1", ""}, {"a", std::nullopt, "2", ""}}, std::nullopt),
                  DatasetError);
  CHECK_THROWS_AS(build_tree("x", "p", {{"a", "zzz", "1", ""}}, std::nullopt), DatasetError);
  CHECK_THROWS_AS(build_tree("x", "", {}, std::nullopt), DatasetError);
}

TEST_CASE("malformed records name line and field") {
  const std::string good = R"({"id":"ok","post":"p","comments":[]})";
  try {
    parse_text(good + "\n" + R"({"id":"bad","comments":[]})" + "\n");
    FAIL("expected an error");
  } catch (const DatasetError& e) {
    CHECK(e.line() == 2);
    CHECK(e.field() == "post");
  }
  try {
    parse_text(R"({"id":"x","post":"p","comments":[],"label":"L9"})" "\n");
    FAIL("expected an error");
  } catch (const DatasetError& e) {
    CHECK(e.field() == "label");
  }
  CHECK_THROWS_AS(parse_text("{not json\n"), DatasetError);
  CHECK_THROWS_AS(parse_text(good + "\n" + good + "\n"), DatasetError);
}

TEST_CASE("round trip over the ten record fixture") {
  const auto labels = RiskLabelSet::generic();
  const auto first = parse_dataset(testing::fixture("roundtrip10.jsonl"), labels);
  REQUIRE(first.trees.size() == 10);
  std::ostringstream out;
  write_dataset(out, first);
  std::istringstream in(out.str());
  const auto second = parse_dataset(in, labels, first.name);
  CHECK(second == first);

  // Independent check: every input comment id survives with its text.
  std::map<std::string, std::string> expected;
  std::ifstream raw(testing::fixture("roundtrip10.jsonl"));
  std::string line;
  while (std::getline(raw, line)) {
    const auto j = nlohmann::json::parse(line);
    for (const auto& c : j["comments"]) expected[c["id"].get<std::string>()] = c["text"].get<std::string>();
  }
  std::map<std::string, std::string> seen;
  for (const auto& t : second.trees) visit_depth_first(t, [&](const CommentNode& c) { seen[c.id] = c.text; });
  CHECK(seen == expected);
  CHECK_FALSE(second.trees[7].gold_label.has_value());
}

TEST_CASE("node count invariant over the fixtures") {
  for (const auto& t : testing::fixture_dataset().trees) {
    std::size_t comments = 0;
    bool depths_ok = true;
    std::function<void(const CommentNode&, int)> walk = [&](const CommentNode& c, int d) {
      ++comments;
      depths_ok = depths_ok && c.depth == d;
      for (const auto& ch : c.children) walk(ch, d + 1);
    };
    for (const auto& c : t.root_comments) walk(c, 1);
    CHECK(t.node_count == comments + 1);
    CHECK(depths_ok);
  }
}

TEST_CASE("render: post only") {
  const auto t = build_tree("p", "just a post", {}, std::nullopt);
  CHECK(render_tree(t) == "[POST] just a post");
}

TEST_CASE("render: depth limit drops deep nodes and marks truncation") {
  const auto t = chain("c", 5);
  const std::string r = render_tree(t, {2, 60});
  CHECK(r.find("depth 1") != std::string::npos);
  CHECK(r.find("depth 2") != std::string::npos);
  CHECK(r.find("depth 3") == std::string::npos);
  CHECK(r.find("depth 5") == std::string::npos);
  CHECK(r.ends_with("\n[truncated]"));
  CHECK(render_tree(t, {5, 60}).find("[truncated]") == std::string::npos);
}

TEST_CASE("render: node budget admits breadth first") {
  std::vector<FlatComment> flat{{"a", std::nullopt, "A", ""}, {"a1", "a", "A1", ""}, {"b", std::nullopt, "B", ""}};
  const auto t = build_tree("x", "P", flat, std::nullopt);
  // Budget 3: post, A, B. A1 is deeper and is dropped even though it comes first depth-first.
  CHECK(render_tree(t, {6, 3}) == "[POST] P\n  [COMMENT] A\n  [COMMENT] B\n[truncated]");
  CHECK(render_tree(t, {6, 4}) == "[POST] P\n  [COMMENT] A\n    [COMMENT] A1\n  [COMMENT] B");
}

TEST_CASE("render: golden fixture") {
  std::ifstream in(testing::fixture("render_tree.json"));
  std::string line;
  std::getline(in, line);
  const auto t = parse_record(line, RiskLabelSet::generic(), 1);
  const std::string actual = render_tree(t) + "\n--- max_depth=2 max_nodes=5\n" + render_tree(t, {2, 5}) + "\n";
  CHECK(actual == testing::check_golden("render_tree.txt", actual));
}

TEST_CASE("kfold: ten trees, five folds of two") {
  const auto ds = labelled(5, 2);
  const auto folds = kfold_split(ds, 5, 1);
  REQUIRE(folds.size() == 5);
  std::multiset<std::string> all;
  for (const auto& f : folds) {
    CHECK(f.test.trees.size() == 2);
    CHECK(f.train.trees.size() == 8);
    for (const auto& t : f.test.trees) all.insert(t.id);
  }
  CHECK(all.size() == 10);
  CHECK(std::set<std::string>(all.begin(), all.end()).size() == 10);
}

TEST_CASE("kfold: same seed, same folds; train and test disjoint") {
  const auto ds = labelled(5, 4);
  const auto a = kfold_split(ds, 5, 99);
  const auto b = kfold_split(ds, 5, 99);
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i].test == b[i].test);
    CHECK(a[i].train == b[i].train);
    std::set<std::string> test_ids;
    for (const auto& t : a[i].test.trees) test_ids.insert(t.id);
    for (const auto& t : a[i].train.trees) CHECK(test_ids.count(t.id) == 0);
  }
}

TEST_CASE("kfold: twenty trees, five per label, each fold one of each label") {
  const auto folds = kfold_split(labelled(5, 4), 5, 7);
  for (const auto& f : folds) {
    std::multiset<std::size_t> labels;
    for (const auto& t : f.test.trees) labels.insert(*t.gold_label);
    CHECK(labels == std::multiset<std::size_t>{0, 1, 2, 3});
  }
}

TEST_CASE("kfold: unlabelled tree and bad k are errors") {
  auto ds = labelled(3, 2);
  CHECK_THROWS_AS(kfold_split(ds, 1, 0), ValidationError);
  CHECK_THROWS_AS(kfold_split(ds, 7, 0), ValidationError);
  ds.trees.push_back(testing::simple_tree("u", "unlabelled"));
  CHECK_THROWS_AS(kfold_split(ds, 2, 0), ValidationError);
}
