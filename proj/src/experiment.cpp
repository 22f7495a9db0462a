#include "plmgnn/experiment.hpp"

#include <json.hpp>

#include <algorithm>
#include <charconv>
#include <cstdio>
#include <sstream>

#include "plmgnn/error.hpp"
#include "plmgnn/train.hpp"

namespace plmgnn {
namespace {

using nlohmann::json;

constexpr ConfigKey kKeys[] = {
    {"task", "java250 | devign"},
    {"family", "gnn_only | hybrid | frozen_mlp"},
    {"plm", "label of the embedding extractor (ANOVA factor), free text"},
    {"cache", "embedding cache (.pgec); required for hybrid and frozen_mlp, forbidden for gnn_only"},
    {"backbone", "gcn | gat | tgnn"},
    {"layers", "message-passing layers; fixed at 8"},
    {"heads", "attention heads for gat/tgnn; fixed at 8"},
    {"hidden", "GNN width; 768"},
    {"norm", "graph_norm | layer_norm"},
    {"activation", "relu | leaky_relu | gelu"},
    {"fusion", "concat | sum | gated_sum"},
    {"pooling", "attentional | sum | max"},
    {"dropout", "GNN: uniform in [0.00, 0.10]; frozen MLP: [0, 0.6]"},
    {"fusion_dim", "width of each fused branch; 768"},
    {"type_dim", "node-type embedding width; 64"},
    {"mlp_hidden", "frozen MLP width: 256 | 512 | 1024 | 2048"},
    {"mlp_depth", "frozen MLP affine layers, 1..5"},
    {"epochs", "fixed budget: 20 (devign), 40 (java250)"},
    {"batch_size", "24 (devign), 32 (java250)"},
    {"seeds", "comma-separated, e.g. 1,2,3"},
    {"lr_max", "peak learning rate; log-uniform in [5e-6, 1e-4] (frozen MLP: [1e-4, 3e-3])"},
    {"div_factor", "LR peak/initial ratio: 100 | 50 | 10"},
    {"pct_start", "warm-up fraction, uniform in [0.05, 0.15]"},
    {"final_div_factor", "one-cycle final divisor; 1e4"},
    {"linear_warmup", "true = linear warm-up, false = cosine (default)"},
    {"weight_decay", "log-uniform in [1e-6, 1e-3] (frozen MLP: [1e-6, 1e-2])"},
    {"class_weighting", "inverse-frequency loss weights; true for devign"},
    {"pe_sign_flip", "random PE sign flips during training"},
    {"selection_metric", "f1 (java250) | auprc (devign) | accuracy"},
};

bool parse_bool(std::string_view v) {
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  throw Error(ErrorCode::invalid_argument, "expected a boolean, got '" + std::string(v) + "'");
}

template <typename T>
T parse_number(std::string_view v) {
  T out{};
  const auto* end = v.data() + v.size();
  auto [ptr, ec] = std::from_chars(v.data(), end, out);
  if (ec != std::errc{} || ptr != end)
    throw Error(ErrorCode::invalid_argument, "expected a number, got '" + std::string(v) + "'");
  return out;
}

std::string_view trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6g", v);
  return buf;
}

json prf_json(const Prf& p) { return {{"precision", p.precision}, {"recall", p.recall}, {"f1", p.f1}}; }

}  // namespace

void ExperimentSpec::validate() const {
  const bool needs_cache = family != ModelFamily::gnn_only;
  if (needs_cache && cache_path.empty())
    throw Error(ErrorCode::invalid_argument, std::string(to_string(family)) + " runs need an embedding cache");
  if (!needs_cache && !cache_path.empty())
    throw Error(ErrorCode::invalid_argument, "gnn_only runs must not reference an embedding cache");
  protocol.validate();
}

std::string ExperimentSpec::to_json() const {
  json j{{"task", to_string(task)},
         {"family", to_string(family)},
         {"plm", plm},
         {"cache", cache_path},
         {"model", json::parse(model.to_json())},
         {"protocol", json::parse(protocol.to_json())}};
  return j.dump(2);
}

ExperimentSpec ExperimentSpec::from_json(const std::string& text) {
  ExperimentSpec s;
  try {
    auto j = json::parse(text);
    s.task = parse_task(j.at("task").get<std::string>());
    s.family = parse_family(j.at("family").get<std::string>());
    s.plm = j.value("plm", "none");
    s.cache_path = j.value("cache", "");
    s.model = ModelConfig::from_json(j.at("model").dump());
    s.protocol = TrainProtocol::from_json(j.at("protocol").dump());
  } catch (const json::exception& e) {
    throw Error(ErrorCode::format, std::string("bad experiment manifest: ") + e.what());
  }
  return s;
}

ExperimentSpec default_spec(Task task) {
  ExperimentSpec s;
  s.task = task;
  s.protocol = task == Task::devign ? TrainProtocol::devign_defaults() : TrainProtocol::java250_defaults();
  s.model.class_weighting = s.protocol.class_weighting;
  return s;
}

std::span<const ConfigKey> config_keys() { return kKeys; }

void apply_setting(ExperimentSpec& s, std::string_view key, std::string_view raw) {
  const auto v = trim(raw);
  const std::string str(v);
  auto& m = s.model;
  auto& p = s.protocol;
  if (key == "task") s.task = parse_task(v);
  else if (key == "family") s.family = parse_family(v);
  else if (key == "plm") s.plm = str;
  else if (key == "cache") s.cache_path = str;
  else if (key == "backbone") m.backbone = parse_backbone(v);
  else if (key == "layers") m.layers = parse_number<int>(v);
  else if (key == "heads") m.heads = parse_number<int>(v);
  else if (key == "hidden") m.hidden = parse_number<int>(v);
  else if (key == "norm") m.norm = parse_norm(v);
  else if (key == "activation") m.activation = parse_activation(v);
  else if (key == "fusion") m.fusion = parse_fusion(v);
  else if (key == "pooling") m.pooling = parse_pool(v);
  else if (key == "dropout") m.dropout = parse_number<double>(v);
  else if (key == "fusion_dim") m.fusion_dim = parse_number<int>(v);
  else if (key == "type_dim") m.type_dim = parse_number<int>(v);
  else if (key == "mlp_hidden") m.mlp_hidden = parse_number<int>(v);
  else if (key == "mlp_depth") m.mlp_depth = parse_number<int>(v);
  else if (key == "epochs") p.epochs = parse_number<int>(v);
  else if (key == "batch_size") p.batch_size = parse_number<int>(v);
  else if (key == "seeds") {
    p.seeds.clear();
    std::string_view rest = v;
    while (!rest.empty()) {
      const auto comma = rest.find(',');
      p.seeds.push_back(parse_number<std::uint64_t>(trim(rest.substr(0, comma))));
      rest = comma == std::string_view::npos ? std::string_view{} : rest.substr(comma + 1);
    }
  } else if (key == "lr_max") p.lr_max = parse_number<double>(v);
  else if (key == "div_factor") p.div_factor = parse_number<double>(v);
  else if (key == "pct_start") p.pct_start = parse_number<double>(v);
  else if (key == "final_div_factor") p.final_div_factor = parse_number<double>(v);
  else if (key == "linear_warmup") p.linear_warmup = parse_bool(v);
  else if (key == "weight_decay") p.weight_decay = parse_number<double>(v);
  else if (key == "class_weighting") p.class_weighting = m.class_weighting = parse_bool(v);
  else if (key == "pe_sign_flip") p.pe_sign_flip = parse_bool(v);
  else if (key == "selection_metric") p.selection_metric = str;
  else throw Error(ErrorCode::invalid_argument, "unknown configuration key '" + std::string(key) + "'");
}

void apply_flat_config(ExperimentSpec& spec, std::string_view text) {
  std::size_t line_no = 0;
  while (!text.empty()) {
    const auto nl = text.find('\n');
    auto line = text.substr(0, nl);
    text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string_view::npos)
      throw Error(ErrorCode::invalid_argument, "config line " + std::to_string(line_no) + ": expected key = value");
    try {
      apply_setting(spec, trim(line.substr(0, eq)), line.substr(eq + 1));
    } catch (const Error& e) {
      throw Error(e.code(), "config line " + std::to_string(line_no) + ": " + e.what());
    }
  }
}

ExperimentSpec spec_from_flat_config(std::string_view text, std::optional<Task> task) {
  // The task picks the protocol defaults, so it is resolved before the other keys.
  ExperimentSpec probe;
  apply_flat_config(probe, text);
  auto spec = default_spec(task.value_or(probe.task));
  apply_flat_config(spec, text);
  if (task) spec.task = *task;
  return spec;
}

std::string render_flat_config(const ExperimentSpec& s) {
  const auto& m = s.model;
  const auto& p = s.protocol;
  std::string seeds;
  for (std::size_t i = 0; i < p.seeds.size(); ++i) seeds += (i ? "," : "") + std::to_string(p.seeds[i]);
  const std::map<std::string_view, std::string> values{
      {"task", std::string(to_string(s.task))},
      {"family", std::string(to_string(s.family))},
      {"plm", s.plm},
      {"cache", s.cache_path},
      {"backbone", std::string(to_string(m.backbone))},
      {"layers", std::to_string(m.layers)},
      {"heads", std::to_string(m.heads)},
      {"hidden", std::to_string(m.hidden)},
      {"norm", std::string(to_string(m.norm))},
      {"activation", std::string(to_string(m.activation))},
      {"fusion", std::string(to_string(m.fusion))},
      {"pooling", std::string(to_string(m.pooling))},
      {"dropout", fmt(m.dropout)},
      {"fusion_dim", std::to_string(m.fusion_dim)},
      {"type_dim", std::to_string(m.type_dim)},
      {"mlp_hidden", std::to_string(m.mlp_hidden)},
      {"mlp_depth", std::to_string(m.mlp_depth)},
      {"epochs", std::to_string(p.epochs)},
      {"batch_size", std::to_string(p.batch_size)},
      {"seeds", seeds},
      {"lr_max", fmt(p.lr_max)},
      {"div_factor", fmt(p.div_factor)},
      {"pct_start", fmt(p.pct_start)},
      {"final_div_factor", fmt(p.final_div_factor)},
      {"linear_warmup", p.linear_warmup ? "true" : "false"},
      {"weight_decay", fmt(p.weight_decay)},
      {"class_weighting", p.class_weighting ? "true" : "false"},
      {"pe_sign_flip", p.pe_sign_flip ? "true" : "false"},
      {"selection_metric", p.selection_metric},
  };
  std::string out;
  for (const auto& k : kKeys) {
    out += "# " + std::string(k.doc) + "\n";
    const auto& v = values.at(k.key);
    out += (v.empty() ? "# " : "") + std::string(k.key) + " = " + v + "\n";
  }
  return out;
}

void check_features(const ExperimentSpec& spec, std::span<const ProcessedSample> data) {
  if (spec.family == ModelFamily::gnn_only) return;
  for (const auto& s : data)
    if (s.semantic.cols() == 0 || s.pooled.size() == 0)
      throw Error(ErrorCode::invalid_argument, s.sample_id + ": no semantic features; preprocess with --cache for " +
                                                   std::string(to_string(spec.family)) + " runs");
}

ModelConfig resolve_model(const ExperimentSpec& spec, std::span<const ProcessedSample> data) {
  if (data.empty()) throw Error(ErrorCode::empty_split, "no preprocessed samples");
  ModelConfig m = spec.model;
  const auto& first = data.front();
  m.pe_dim = static_cast<int>(first.pe.values.cols());
  m.type_vocab = static_cast<int>(TypeVocabulary::for_language(first.graph.language).size());
  m.semantic_enabled = spec.family == ModelFamily::hybrid;
  m.semantic_dim = spec.family == ModelFamily::gnn_only ? 0 : static_cast<int>(first.semantic.cols());
  if (spec.family == ModelFamily::frozen_mlp) m.backbone = Backbone::mlp_baseline;
  if (spec.task == Task::devign) {
    m.num_classes = 2;
  } else {
    int max_label = 0;
    for (const auto& s : data) max_label = std::max(max_label, s.label);
    m.num_classes = std::max(2, max_label + 1);
  }
  m.class_weighting = spec.protocol.class_weighting;
  m.validate();
  return m;
}

std::vector<GraphExample> split_examples(const ExperimentSpec& spec, std::span<const ProcessedSample> data,
                                         Split split) {
  std::vector<GraphExample> out;
  for (const auto& s : data) {
    if (s.split != split) continue;
    auto ex = to_example(s);
    if (spec.family == ModelFamily::gnn_only) {
      ex.semantic.resize(0, 0);
      ex.pooled.resize(0);
    }
    out.push_back(std::move(ex));
  }
  return out;
}

SeedEvaluation evaluate_model(const Classifier<float>& model, Task task,
                              const std::map<Split, std::vector<GraphExample>>& data, int batch_size,
                              std::uint64_t seed) {
  SeedEvaluation out;
  out.seed = seed;
  const bool binary = task == Task::devign;
  std::map<Split, Predictions> preds;
  for (const auto& [split, examples] : data)
    if (!examples.empty()) preds.emplace(split, predict(model, examples, batch_size));

  if (binary) {
    const auto val = preds.find(Split::val);
    if (val == preds.end()) throw Error(ErrorCode::empty_split, "threshold calibration needs a validation split");
    out.threshold = calibrate_threshold(val->second.positive_scores(), val->second.labels);
  }
  for (const auto& [split, p] : preds) {
    SplitMetrics m;
    m.split = split;
    m.count = p.labels.size();
    std::vector<int> predicted;
    if (binary) {
      const auto scores = p.positive_scores();
      predicted = apply_threshold(scores, out.threshold->tau);
      m.positive = positive_class_prf(p.labels, predicted);
      if (std::count(p.labels.begin(), p.labels.end(), 1) > 0) m.auprc = auprc(p.labels, scores);
    } else {
      predicted = p.argmax();
    }
    m.macro = macro_prf(p.labels, predicted, static_cast<int>(p.probs.cols()));
    m.accuracy = accuracy(p.labels, predicted);
    out.splits.push_back(m);
  }
  return out;
}

std::string evaluation_json(std::span<const SeedEvaluation> runs) {
  json arr = json::array();
  for (const auto& r : runs) {
    json j{{"seed", r.seed}};
    if (r.threshold) j["threshold"] = {{"tau", r.threshold->tau}, {"val_f1", r.threshold->val_f1}};
    json splits = json::object();
    for (const auto& m : r.splits) {
      json s{{"count", m.count}, {"macro", prf_json(m.macro)}, {"accuracy", m.accuracy}};
      if (m.positive) s["positive"] = prf_json(*m.positive);
      if (m.auprc) s["auprc"] = *m.auprc;
      splits[std::string(to_string(m.split))] = s;
    }
    j["splits"] = splits;
    arr.push_back(j);
  }
  return arr.dump(2);
}

std::string evaluation_table(std::span<const SeedEvaluation> runs, Task task) {
  std::map<Split, std::map<std::string, std::vector<double>>> cols;
  std::vector<std::string> order;
  auto add = [&](Split sp, const std::string& name, double v) {
    if (std::find(order.begin(), order.end(), name) == order.end()) order.push_back(name);
    cols[sp][name].push_back(100.0 * v);
  };
  for (const auto& r : runs)
    for (const auto& m : r.splits) {
      if (m.split == Split::train) continue;
      add(m.split, "macro_f1", m.macro.f1);
      add(m.split, "macro_p", m.macro.precision);
      add(m.split, "macro_r", m.macro.recall);
      if (task == Task::devign) {
        if (m.auprc) add(m.split, "auprc", *m.auprc);
        add(m.split, "pos_f1", m.positive->f1);
        add(m.split, "pos_p", m.positive->precision);
        add(m.split, "pos_r", m.positive->recall);
      }
    }
  std::ostringstream os;
  for (const auto& [split, metrics] : cols) {
    os << "[" << to_string(split) << "]";
    for (const auto& name : order) {
      auto it = metrics.find(name);
      if (it == metrics.end()) continue;
      const auto ms = summarize(it->second);
      os << "  " << name << " " << fmt(ms.mean);
      if (ms.std) os << " (" << fmt(*ms.std) << ")";
    }
    os << "\n";
  }
  return os.str();
}

}  // namespace plmgnn
