#include <doctest.h>

#include <set>

#include "plmgnn/align.hpp"
#include "plmgnn/error.hpp"
#include "test_util.hpp"

using namespace plmgnn;
using plmgnn::testing::whitespace_tokens;

namespace {

AstGraph spans_graph(const std::vector<std::pair<std::uint32_t, std::uint32_t>>& spans) {
  AstGraph g;
  for (std::uint32_t i = 0; i < spans.size(); ++i) g.nodes.push_back({i, 1, "x", spans[i].first, spans[i].second, false});
  return g;
}

TokenOffsets offsets_of(const std::vector<std::pair<std::uint32_t, std::uint32_t>>& toks) {
  TokenOffsets o(static_cast<Eigen::Index>(toks.size()), 2);
  for (std::size_t j = 0; j < toks.size(); ++j) {
    o(j, 0) = toks[j].first;
    o(j, 1) = toks[j].second;
  }
  return o;
}

}  // namespace

TEST_CASE("half-open overlap examples") {
  auto g = spans_graph({{0, 3}, {4, 4}});
  auto sets = align_tokens_to_nodes(g, offsets_of({{0, 2}, {2, 4}}));
  CHECK(sets[0] == std::vector<std::uint32_t>{0, 1});
  CHECK(sets[1].empty());
}

TEST_CASE("root collects every non-empty token; specials never align") {
  auto g = spans_graph({{0, 10}});
  auto o = offsets_of({{kSpecialTokenOffset, kSpecialTokenOffset}, {0, 3}, {3, 3}, {3, 10},
                       {kSpecialTokenOffset, kSpecialTokenOffset}});
  auto sets = align_tokens_to_nodes(g, o);
  CHECK(sets[0] == std::vector<std::uint32_t>{1, 3});
}

TEST_CASE("node semantic features") {
  RowMatrixXf emb(3, 2);
  emb << 1, 2, 3, 4, 5, 6;
  IndexSets sets{{0, 1}, {}, {2}};
  auto h = node_semantic_features(sets, emb);
  CHECK(h(0, 0) == 2.0f);
  CHECK(h(0, 1) == 3.0f);
  CHECK(h.row(1).isZero(0.0f));
  CHECK(h.row(2) == emb.row(2));
}

TEST_CASE("alignment against parsed C: containment and leaf coverage") {
  const std::string src = "int add(int a, int b) {\n  return a + b;\n}\n";
  auto g = parse_source(src, Language::c);
  auto tokens = whitespace_tokens(src, 3);
  auto sem = align_sample(g, tokens);
  const auto parents = g.parents();
  for (std::uint32_t v = 1; v < g.num_nodes(); ++v) {
    const auto& child = sem.index_sets[v];
    const std::set<std::uint32_t> parent(sem.index_sets[parents[v]].begin(), sem.index_sets[parents[v]].end());
    for (auto j : child) CHECK(parent.count(j) == 1);
  }
  const auto kids = g.children();
  std::set<std::uint32_t> leaf_union;
  for (std::uint32_t v = 0; v < g.num_nodes(); ++v)
    if (kids[v].empty()) leaf_union.insert(sem.index_sets[v].begin(), sem.index_sets[v].end());
  CHECK(leaf_union == std::set<std::uint32_t>(sem.index_sets[0].begin(), sem.index_sets[0].end()));
  CHECK(leaf_alignment_rate(g, tokens.offsets) == 1.0);
  for (std::uint32_t v = 0; v < g.num_nodes(); ++v)
    CHECK((sem.h.row(v).isZero(0.0f) == sem.index_sets[v].empty()));
}

TEST_CASE("checksum mismatch between graph and tokens") {
  auto g = parse_source("int x;", Language::c);
  auto tokens = whitespace_tokens("int y;", 2);
  try {
    align_sample(g, tokens);
    FAIL("expected mismatch");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::checksum_mismatch);
  }
}

TEST_CASE("valid token mean skips special tokens") {
  TokenTable t;
  t.offsets = offsets_of({{kSpecialTokenOffset, kSpecialTokenOffset}, {0, 1}, {1, 2},
                          {kSpecialTokenOffset, kSpecialTokenOffset}});
  t.embeddings.resize(4, 2);
  t.embeddings << 100, 100, 1, 2, 3, 4, -100, -100;
  auto m = valid_token_mean(t);
  CHECK(m(0) == 2.0f);
  CHECK(m(1) == 3.0f);

  TokenTable only_special;
  only_special.offsets = offsets_of({{kSpecialTokenOffset, kSpecialTokenOffset}});
  only_special.embeddings = RowMatrixXf::Ones(1, 2);
  CHECK_THROWS_AS(valid_token_mean(only_special), Error);
}
