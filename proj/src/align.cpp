#include "plmgnn/align.hpp"

#include <algorithm>
#include <numeric>

#include "plmgnn/error.hpp"

namespace plmgnn {
namespace {

bool is_special(const TokenOffsets& o, Eigen::Index j) {
  return o(j, 0) == kSpecialTokenOffset && o(j, 1) == kSpecialTokenOffset;
}

}  // namespace

IndexSets align_tokens_to_nodes(const AstGraph& g, const TokenOffsets& offsets) {
  // Real tokens sorted by start so each node scans only a narrow window.
  std::vector<std::uint32_t> order;
  std::uint32_t max_len = 0;
  for (Eigen::Index j = 0; j < offsets.rows(); ++j) {
    if (is_special(offsets, j) || offsets(j, 1) <= offsets(j, 0)) continue;
    order.push_back(static_cast<std::uint32_t>(j));
    max_len = std::max(max_len, offsets(j, 1) - offsets(j, 0));
  }
  std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) {
    return offsets(a, 0) < offsets(b, 0);
  });
  std::vector<std::uint32_t> starts(order.size());
  for (std::size_t i = 0; i < order.size(); ++i) starts[i] = offsets(order[i], 0);

  IndexSets sets(g.num_nodes());
  for (std::size_t v = 0; v < g.num_nodes(); ++v) {
    const auto a = g.nodes[v].span_start;
    const auto b = g.nodes[v].span_end;
    if (a >= b) continue;
    // any overlapping token has start > a - max_len
    const std::uint32_t lo_start = a >= max_len ? a - max_len : 0;
    auto it = std::lower_bound(starts.begin(), starts.end(), lo_start);
    auto& set = sets[v];
    for (auto k = static_cast<std::size_t>(it - starts.begin()); k < starts.size() && starts[k] < b;
         ++k) {
      const auto j = order[k];
      if (a < offsets(j, 1)) set.push_back(j);
    }
    std::sort(set.begin(), set.end());
  }
  return sets;
}

RowMatrixXf node_semantic_features(const IndexSets& index_sets, const RowMatrixXf& embeddings) {
  RowMatrixXf h = RowMatrixXf::Zero(static_cast<Eigen::Index>(index_sets.size()), embeddings.cols());
  for (std::size_t v = 0; v < index_sets.size(); ++v) {
    const auto& set = index_sets[v];
    if (set.empty()) continue;
    for (auto j : set) {
      if (j >= embeddings.rows())
        throw Error(ErrorCode::invalid_argument, "token index out of range");
      h.row(static_cast<Eigen::Index>(v)) += embeddings.row(j);
    }
    h.row(static_cast<Eigen::Index>(v)) /= static_cast<float>(set.size());
  }
  return h;
}

NodeSemantics align_sample(const AstGraph& g, const TokenTable& tokens) {
  if (!g.source_ref.empty() && to_hex(tokens.source_checksum) != g.source_ref)
    throw Error(ErrorCode::checksum_mismatch,
                tokens.sample_id + ": token offsets refer to a different source text");
  NodeSemantics out;
  out.index_sets = align_tokens_to_nodes(g, tokens.offsets);
  out.h = node_semantic_features(out.index_sets, tokens.embeddings);
  out.unaligned_count = static_cast<std::size_t>(
      std::count_if(out.index_sets.begin(), out.index_sets.end(),
                    [](const auto& s) { return s.empty(); }));
  return out;
}

double leaf_alignment_rate(const AstGraph& g, const TokenOffsets& offsets) {
  std::vector<bool> is_leaf(g.num_nodes(), true);
  for (const auto& e : g.edges)
    if (e.kind == EdgeKind::parent_child) is_leaf[e.src] = false;
  const auto sets = align_tokens_to_nodes(g, offsets);
  std::vector<bool> hit(static_cast<std::size_t>(offsets.rows()), false);
  for (std::size_t v = 0; v < sets.size(); ++v)
    if (is_leaf[v])
      for (auto j : sets[v]) hit[j] = true;
  std::size_t total = 0, aligned = 0;
  for (Eigen::Index j = 0; j < offsets.rows(); ++j) {
    if (is_special(offsets, j) || offsets(j, 1) <= offsets(j, 0)) continue;
    ++total;
    if (hit[j]) ++aligned;
  }
  return total == 0 ? 1.0 : static_cast<double>(aligned) / static_cast<double>(total);
}

Eigen::VectorXf valid_token_mean(const TokenTable& tokens) {
  Eigen::VectorXf sum = Eigen::VectorXf::Zero(tokens.hidden_dim());
  std::size_t count = 0;
  for (Eigen::Index j = 0; j < tokens.token_count(); ++j) {
    if (tokens.is_special(j)) continue;
    sum += tokens.embeddings.row(j).transpose();
    ++count;
  }
  if (count == 0)
    throw Error(ErrorCode::degenerate_sample, tokens.sample_id + ": no valid tokens to pool");
  return sum / static_cast<float>(count);
}

}  // namespace plmgnn
