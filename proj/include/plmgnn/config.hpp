#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "plmgnn/nn/module.hpp"

namespace plmgnn {

enum class Backbone { gcn, gat, tgnn, mlp_baseline };
enum class NormKind { graph_norm, layer_norm };
enum class PoolKind { attentional, sum, max };
enum class FusionStrategy { concat, sum, gated_sum };
enum class Task { java250, devign };
enum class ModelFamily { gnn_only, hybrid, frozen_mlp };

Backbone parse_backbone(std::string_view s);
NormKind parse_norm(std::string_view s);
PoolKind parse_pool(std::string_view s);
FusionStrategy parse_fusion(std::string_view s);
nn::Activation parse_activation(std::string_view s);
Task parse_task(std::string_view s);
ModelFamily parse_family(std::string_view s);

std::string_view to_string(Backbone v);
std::string_view to_string(NormKind v);
std::string_view to_string(PoolKind v);
std::string_view to_string(FusionStrategy v);
std::string_view to_string(nn::Activation v);
std::string_view to_string(Task v);
std::string_view to_string(ModelFamily v);

/// Architecture of one classifier. Defaults follow the fixed-capacity GNN
/// setting (8 layers, 8 heads, width 768).
struct ModelConfig {
  Backbone backbone = Backbone::gcn;
  int layers = 8;
  int heads = 8;
  int hidden = 768;
  NormKind norm = NormKind::graph_norm;
  nn::Activation activation = nn::Activation::relu;
  FusionStrategy fusion = FusionStrategy::concat;
  PoolKind pooling = PoolKind::attentional;
  double dropout = 0.0;  // [0, 0.1] for GNNs
  bool class_weighting = false;
  int num_classes = 2;

  // input feature widths
  bool semantic_enabled = false;  // false = GNN-only
  int semantic_dim = 0;           // PLM hidden size h
  int pe_dim = 32;                // k
  int type_vocab = 1;
  int fusion_dim = 768;           // d_f
  int type_dim = 64;              // d_type

  // frozen-embedding MLP baseline
  int mlp_hidden = 512;  // {256, 512, 1024, 2048}
  int mlp_depth = 2;     // number of affine layers, 1..5

  void validate() const;
  std::string to_json() const;
  static ModelConfig from_json(const std::string& text);
};

/// Fixed-budget training protocol with best-validation checkpoint selection.
struct TrainProtocol {
  int epochs = 20;
  int batch_size = 24;
  std::vector<std::uint64_t> seeds{1, 2, 3};
  double lr_max = 1e-4;      // log-uniform in [5e-6, 1e-4]
  double div_factor = 100;   // {100, 50, 10}
  double pct_start = 0.15;   // [0.05, 0.15]
  double final_div_factor = 1e4;
  bool linear_warmup = false;
  double weight_decay = 1e-5;  // log-uniform in [1e-6, 1e-3]
  bool class_weighting = false;
  bool pe_sign_flip = false;
  std::string selection_metric = "auprc";  // "f1" for Java250

  void validate() const;
  std::string to_json() const;
  static TrainProtocol from_json(const std::string& text);

  static TrainProtocol devign_defaults();
  static TrainProtocol java250_defaults();
};

}  // namespace plmgnn
