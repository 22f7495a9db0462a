#include "plmgnn/config.hpp"

#include <json.hpp>

#include <algorithm>
#include <set>

#include "plmgnn/error.hpp"

namespace plmgnn {
namespace {

using nlohmann::json;

template <typename E, std::size_t N>
E lookup(std::string_view s, const std::pair<std::string_view, E> (&table)[N], const char* what) {
  for (const auto& [name, value] : table)
    if (name == s) return value;
  throw Error(ErrorCode::invalid_argument, std::string("unknown ") + what + " '" + std::string(s) + "'");
}

template <typename E, std::size_t N>
std::string_view name_of(E v, const std::pair<std::string_view, E> (&table)[N]) {
  for (const auto& [name, value] : table)
    if (value == v) return name;
  return "?";
}

constexpr std::pair<std::string_view, Backbone> kBackbones[] = {
    {"gcn", Backbone::gcn}, {"gat", Backbone::gat}, {"tgnn", Backbone::tgnn},
    {"mlp_baseline", Backbone::mlp_baseline}};
constexpr std::pair<std::string_view, NormKind> kNorms[] = {{"graph_norm", NormKind::graph_norm},
                                                            {"layer_norm", NormKind::layer_norm}};
constexpr std::pair<std::string_view, PoolKind> kPools[] = {
    {"attentional", PoolKind::attentional}, {"sum", PoolKind::sum}, {"max", PoolKind::max}};
constexpr std::pair<std::string_view, FusionStrategy> kFusions[] = {
    {"concat", FusionStrategy::concat}, {"sum", FusionStrategy::sum},
    {"gated_sum", FusionStrategy::gated_sum}};
constexpr std::pair<std::string_view, nn::Activation> kActivations[] = {
    {"relu", nn::Activation::relu}, {"leaky_relu", nn::Activation::leaky_relu},
    {"gelu", nn::Activation::gelu}};
constexpr std::pair<std::string_view, Task> kTasks[] = {{"java250", Task::java250},
                                                        {"devign", Task::devign}};
constexpr std::pair<std::string_view, ModelFamily> kFamilies[] = {
    {"gnn_only", ModelFamily::gnn_only}, {"hybrid", ModelFamily::hybrid},
    {"frozen_mlp", ModelFamily::frozen_mlp}};

template <typename T>
void read_opt(const json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

}  // namespace

Backbone parse_backbone(std::string_view s) { return lookup(s, kBackbones, "backbone"); }
NormKind parse_norm(std::string_view s) { return lookup(s, kNorms, "normalization"); }
PoolKind parse_pool(std::string_view s) { return lookup(s, kPools, "pooling"); }
FusionStrategy parse_fusion(std::string_view s) { return lookup(s, kFusions, "fusion strategy"); }
nn::Activation parse_activation(std::string_view s) { return lookup(s, kActivations, "activation"); }
Task parse_task(std::string_view s) { return lookup(s, kTasks, "task"); }
ModelFamily parse_family(std::string_view s) { return lookup(s, kFamilies, "model family"); }

std::string_view to_string(Backbone v) { return name_of(v, kBackbones); }
std::string_view to_string(NormKind v) { return name_of(v, kNorms); }
std::string_view to_string(PoolKind v) { return name_of(v, kPools); }
std::string_view to_string(FusionStrategy v) { return name_of(v, kFusions); }
std::string_view to_string(nn::Activation v) { return name_of(v, kActivations); }
std::string_view to_string(Task v) { return name_of(v, kTasks); }
std::string_view to_string(ModelFamily v) { return name_of(v, kFamilies); }

void ModelConfig::validate() const {
  auto fail = [](const std::string& m) { throw Error(ErrorCode::invalid_argument, m); };
  if (layers < 1) fail("layers must be >= 1");
  if (hidden < 1) fail("hidden must be >= 1");
  if ((backbone == Backbone::gat || backbone == Backbone::tgnn) && (heads < 1 || hidden % heads != 0))
    fail("hidden must be divisible by heads");
  if (dropout < 0 || dropout >= 1) fail("dropout must be in [0, 1)");
  if (num_classes < 2) fail("num_classes must be >= 2");
  if (semantic_enabled && semantic_dim < 1) fail("semantic branch needs semantic_dim >= 1");
  if (pe_dim < 1 || fusion_dim < 1 || type_dim < 1 || type_vocab < 1) fail("feature widths must be >= 1");
  if (backbone == Backbone::mlp_baseline) {
    if (mlp_depth < 1 || mlp_depth > 5) fail("mlp_depth must be in [1, 5]");
    if (mlp_hidden < 1) fail("mlp_hidden must be >= 1");
    if (semantic_dim < 1) fail("MLP baseline needs semantic_dim >= 1");
  }
}

std::string ModelConfig::to_json() const {
  json j{{"backbone", to_string(backbone)},
         {"layers", layers},
         {"heads", heads},
         {"hidden", hidden},
         {"norm", to_string(norm)},
         {"activation", to_string(activation)},
         {"fusion", to_string(fusion)},
         {"pooling", to_string(pooling)},
         {"dropout", dropout},
         {"class_weighting", class_weighting},
         {"num_classes", num_classes},
         {"semantic_enabled", semantic_enabled},
         {"semantic_dim", semantic_dim},
         {"pe_dim", pe_dim},
         {"type_vocab", type_vocab},
         {"fusion_dim", fusion_dim},
         {"type_dim", type_dim},
         {"mlp_hidden", mlp_hidden},
         {"mlp_depth", mlp_depth}};
  return j.dump();
}

ModelConfig ModelConfig::from_json(const std::string& text) {
  ModelConfig c;
  try {
    auto j = json::parse(text);
    if (j.contains("backbone")) c.backbone = parse_backbone(j.at("backbone").get<std::string>());
    if (j.contains("norm")) c.norm = parse_norm(j.at("norm").get<std::string>());
    if (j.contains("activation")) c.activation = parse_activation(j.at("activation").get<std::string>());
    if (j.contains("fusion")) c.fusion = parse_fusion(j.at("fusion").get<std::string>());
    if (j.contains("pooling")) c.pooling = parse_pool(j.at("pooling").get<std::string>());
    read_opt(j, "layers", c.layers);
    read_opt(j, "heads", c.heads);
    read_opt(j, "hidden", c.hidden);
    read_opt(j, "dropout", c.dropout);
    read_opt(j, "class_weighting", c.class_weighting);
    read_opt(j, "num_classes", c.num_classes);
    read_opt(j, "semantic_enabled", c.semantic_enabled);
    read_opt(j, "semantic_dim", c.semantic_dim);
    read_opt(j, "pe_dim", c.pe_dim);
    read_opt(j, "type_vocab", c.type_vocab);
    read_opt(j, "fusion_dim", c.fusion_dim);
    read_opt(j, "type_dim", c.type_dim);
    read_opt(j, "mlp_hidden", c.mlp_hidden);
    read_opt(j, "mlp_depth", c.mlp_depth);
  } catch (const json::exception& e) {
    throw Error(ErrorCode::format, std::string("bad model config: ") + e.what());
  }
  return c;
}

void TrainProtocol::validate() const {
  auto fail = [](const std::string& m) { throw Error(ErrorCode::invalid_argument, m); };
  if (epochs < 0) fail("epochs must be >= 0");
  if (batch_size < 1) fail("batch_size must be >= 1");
  if (seeds.empty()) fail("at least one seed is required");
  if (std::set<std::uint64_t>(seeds.begin(), seeds.end()).size() != seeds.size())
    fail("seeds must be distinct");
  if (lr_max <= 0 || div_factor <= 0 || final_div_factor <= 0) fail("learning rates must be positive");
  if (pct_start < 0 || pct_start > 1) fail("pct_start must be in [0, 1]");
  if (weight_decay < 0) fail("weight_decay must be >= 0");
  if (selection_metric != "f1" && selection_metric != "auprc" && selection_metric != "accuracy")
    fail("selection_metric must be f1, auprc or accuracy");
}

std::string TrainProtocol::to_json() const {
  json j{{"epochs", epochs},
         {"batch_size", batch_size},
         {"seeds", seeds},
         {"lr_max", lr_max},
         {"div_factor", div_factor},
         {"pct_start", pct_start},
         {"final_div_factor", final_div_factor},
         {"linear_warmup", linear_warmup},
         {"weight_decay", weight_decay},
         {"class_weighting", class_weighting},
         {"pe_sign_flip", pe_sign_flip},
         {"selection_metric", selection_metric}};
  return j.dump();
}

TrainProtocol TrainProtocol::from_json(const std::string& text) {
  TrainProtocol p;
  try {
    auto j = json::parse(text);
    read_opt(j, "epochs", p.epochs);
    read_opt(j, "batch_size", p.batch_size);
    read_opt(j, "seeds", p.seeds);
    read_opt(j, "lr_max", p.lr_max);
    read_opt(j, "div_factor", p.div_factor);
    read_opt(j, "pct_start", p.pct_start);
    read_opt(j, "final_div_factor", p.final_div_factor);
    read_opt(j, "linear_warmup", p.linear_warmup);
    read_opt(j, "weight_decay", p.weight_decay);
    read_opt(j, "class_weighting", p.class_weighting);
    read_opt(j, "pe_sign_flip", p.pe_sign_flip);
    read_opt(j, "selection_metric", p.selection_metric);
  } catch (const json::exception& e) {
    throw Error(ErrorCode::format, std::string("bad train protocol: ") + e.what());
  }
  return p;
}

TrainProtocol TrainProtocol::devign_defaults() {
  TrainProtocol p;
  p.epochs = 20;
  p.batch_size = 24;
  p.class_weighting = true;
  p.selection_metric = "auprc";
  return p;
}

TrainProtocol TrainProtocol::java250_defaults() {
  TrainProtocol p;
  p.epochs = 40;
  p.batch_size = 32;
  p.selection_metric = "f1";
  return p;
}

}  // namespace plmgnn
