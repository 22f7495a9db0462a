#pragma once

#include <Eigen/Dense>
#include <Eigen/SparseCore>

#include <memory>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "plmgnn/ast_graph.hpp"
#include "plmgnn/embed_cache.hpp"
#include "plmgnn/nn/tensor.hpp"

namespace plmgnn {

/// Model-ready features of one graph.
struct GraphExample {
  std::string sample_id;
  std::uint32_t num_nodes = 0;
  std::vector<std::pair<std::uint32_t, std::uint32_t>> edges;  // undirected, u < v, unique
  std::vector<int> type_ids;
  Eigen::MatrixXf pe;       // n x k
  RowMatrixXf semantic;     // n x h, empty for GNN-only
  Eigen::VectorXf pooled;   // h, frozen-MLP input; empty when unused
  int label = 0;
};

/// Structural part of an example: edge pairs and type ids from the AST.
GraphExample make_example(const AstGraph& g, std::string sample_id, int label);

/// Disjoint union of several graphs with everything the layers need.
struct GraphBatch {
  Eigen::Index num_nodes = 0;
  Eigen::Index num_graphs = 0;
  std::shared_ptr<const nn::IndexList> membership;  // node -> graph
  std::shared_ptr<const nn::IndexList> type_ids;
  // message edges src -> dst over A + I, sorted by (dst, src)
  std::shared_ptr<const nn::IndexList> msg_src;
  std::shared_ptr<const nn::IndexList> msg_dst;
  Eigen::SparseMatrix<double> gcn_norm;  // D^-1/2 (A + I) D^-1/2
  Eigen::SparseMatrix<float> gcn_norm_f;
  Eigen::MatrixXf pe;
  RowMatrixXf semantic;
  Eigen::MatrixXf pooled;  // graphs x h
  std::vector<int> labels;
  std::vector<std::string> sample_ids;

  template <typename S>
  const Eigen::SparseMatrix<S>& gcn() const {
    if constexpr (std::is_same_v<S, float>)
      return gcn_norm_f;
    else
      return gcn_norm;
  }
};

GraphBatch make_batch(std::span<const GraphExample* const> examples);
GraphBatch make_batch(std::span<const GraphExample> examples);

}  // namespace plmgnn
