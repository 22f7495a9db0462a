#pragma once

#include <cstdint>
#include <vector>

#include "plmgnn/ast_graph.hpp"
#include "plmgnn/embed_cache.hpp"

namespace plmgnn {

using IndexSets = std::vector<std::vector<std::uint32_t>>;

struct NodeSemantics {
  IndexSets index_sets;
  RowMatrixXf h;  // n x hidden
  std::size_t unaligned_count = 0;  // nodes with an empty index set
};

/// I_v = { j : start_j < end_v && start_v < end_j } (half-open overlap).
/// Special tokens never align.
IndexSets align_tokens_to_nodes(const AstGraph& g, const TokenOffsets& offsets);

/// Row-wise mean of the selected embedding rows; empty sets give zero rows.
RowMatrixXf node_semantic_features(const IndexSets& index_sets, const RowMatrixXf& embeddings);

/// Full alignment for one sample. The table's source checksum must match the
/// graph's source_ref, otherwise offsets and spans are not comparable.
NodeSemantics align_sample(const AstGraph& g, const TokenTable& tokens);

/// Fraction of non-special, non-empty tokens that overlap at least one leaf.
double leaf_alignment_rate(const AstGraph& g, const TokenOffsets& offsets);

/// Mean embedding over valid (non-special) tokens; the pooled
/// input of the frozen-embedding MLP baseline.
Eigen::VectorXf valid_token_mean(const TokenTable& tokens);

}  // namespace plmgnn
