#pragma once

#include <random>
#include <string>
#include <vector>

#include "plmgnn/config.hpp"
#include "plmgnn/graph_batch.hpp"
#include "plmgnn/spectral.hpp"
#include "test_util.hpp"

namespace plmgnn::testing {

enum class Shape { path = 0, star = 1, binary_tree = 2 };

/// Path 0-1-...-(n-1), star centred on 0, or a heap-ordered balanced binary tree.
inline AstGraph shape_graph(Shape s, std::uint32_t n) {
  std::vector<std::pair<std::uint32_t, std::uint32_t>> pairs;
  for (std::uint32_t i = 1; i < n; ++i) {
    switch (s) {
      case Shape::path: pairs.emplace_back(i - 1, i); break;
      case Shape::star: pairs.emplace_back(0, i); break;
      case Shape::binary_tree: pairs.emplace_back((i - 1) / 2, i); break;
    }
  }
  return graph_from_edges(n, pairs);
}

/// Balanced 3-class dataset of synthetic shapes with 20-60 nodes, Laplacian PE
/// of width k and a single node type.
inline std::vector<GraphExample> shape_dataset(int count, std::uint64_t seed, int k) {
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<std::uint32_t> size(20, 60);
  std::vector<GraphExample> out;
  for (int i = 0; i < count; ++i) {
    const int label = i % 3;
    auto g = shape_graph(static_cast<Shape>(label), size(rng));
    auto ex = make_example(g, "shape" + std::to_string(i), label);
    ex.pe = positional_encoding(g, PeKind::laplacian, k).values;
    std::fill(ex.type_ids.begin(), ex.type_ids.end(), 0);
    out.push_back(std::move(ex));
  }
  return out;
}

/// Random tree with random PE, semantic features and type ids.
inline GraphExample random_example(std::uint32_t n, int k, int h, int vocab, std::mt19937_64& rng,
                                   int label = 0) {
  auto g = random_tree(n, rng);
  auto ex = make_example(g, "rand" + std::to_string(rng() % 100000), label);
  std::uniform_real_distribution<float> u(-1.0f, 1.0f);
  std::uniform_int_distribution<int> t(0, vocab - 1);
  ex.pe.resize(n, k);
  for (Eigen::Index i = 0; i < ex.pe.size(); ++i) ex.pe.data()[i] = u(rng);
  if (h > 0) {
    ex.semantic.resize(n, h);
    for (Eigen::Index i = 0; i < ex.semantic.size(); ++i) ex.semantic.data()[i] = u(rng);
    ex.pooled = ex.semantic.colwise().mean().transpose();
  }
  for (auto& id : ex.type_ids) id = t(rng);
  return ex;
}

/// Small hybrid configuration used by gradient checks.
inline ModelConfig small_hybrid(Backbone b, FusionStrategy f, PoolKind p) {
  ModelConfig c;
  c.backbone = b;
  c.layers = 2;
  c.hidden = 16;
  c.heads = 2;
  c.fusion = f;
  c.pooling = p;
  c.norm = NormKind::graph_norm;
  c.activation = nn::Activation::gelu;
  c.num_classes = 3;
  c.semantic_enabled = true;
  c.semantic_dim = 5;
  c.pe_dim = 4;
  c.type_vocab = 6;
  c.type_dim = 3;
  c.fusion_dim = 4;
  return c;
}

/// GNN-only model for the shape dataset.
inline ModelConfig shape_model(Backbone b, int k) {
  ModelConfig c;
  c.backbone = b;
  c.layers = 2;
  c.hidden = 32;
  c.heads = 4;
  c.pooling = PoolKind::sum;
  c.num_classes = 3;
  c.pe_dim = k;
  c.type_vocab = 1;
  c.type_dim = 4;
  c.fusion_dim = 32;
  return c;
}

inline TrainProtocol shape_protocol(int epochs) {
  TrainProtocol p;
  p.epochs = epochs;
  p.batch_size = 24;
  p.lr_max = 1e-2;
  p.div_factor = 10;
  p.pct_start = 0.15;
  p.weight_decay = 1e-5;
  p.selection_metric = "accuracy";
  return p;
}

}  // namespace plmgnn::testing
