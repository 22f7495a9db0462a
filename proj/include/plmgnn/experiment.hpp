#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "plmgnn/config.hpp"
#include "plmgnn/datasets.hpp"
#include "plmgnn/eval.hpp"
#include "plmgnn/gnn_layers.hpp"
#include "plmgnn/preprocess.hpp"

namespace plmgnn {

/// One training experiment: task, model family and all hyperparameters.
struct ExperimentSpec {
  Task task = Task::devign;
  ModelFamily family = ModelFamily::gnn_only;
  ModelConfig model;
  TrainProtocol protocol = TrainProtocol::devign_defaults();
  std::string cache_path;  // embedding cache used at preprocessing time
  std::string plm = "none";  // extractor label, the second ANOVA factor

  /// Hybrid and frozen runs need a cache; GNN-only runs must not name one.
  void validate() const;
  std::string to_json() const;
  static ExperimentSpec from_json(const std::string& text);
};

ExperimentSpec default_spec(Task task);

struct ConfigKey {
  std::string_view key;
  std::string_view doc;  // meaning and the recommended range
};

/// Every key accepted in a flat configuration file.
std::span<const ConfigKey> config_keys();

/// Sets one key; unknown keys and malformed values throw invalid_argument.
void apply_setting(ExperimentSpec& spec, std::string_view key, std::string_view value);

/// `key = value` lines, `#` comments. Errors carry the line number.
void apply_flat_config(ExperimentSpec& spec, std::string_view text);

/// Task defaults (from `task` or the override) with the file applied on top.
ExperimentSpec spec_from_flat_config(std::string_view text, std::optional<Task> task = std::nullopt);

/// Flat configuration with the documentation of each key as a comment.
std::string render_flat_config(const ExperimentSpec& spec);

/// Fills input widths and class count from the preprocessed data and derives
/// family-specific settings (semantic branch, MLP backbone).
ModelConfig resolve_model(const ExperimentSpec& spec, std::span<const ProcessedSample> data);

/// Checks that the data carries the features the family needs.
void check_features(const ExperimentSpec& spec, std::span<const ProcessedSample> data);

/// Model-ready examples of one split; semantic features are dropped for GNN-only runs.
std::vector<GraphExample> split_examples(const ExperimentSpec& spec, std::span<const ProcessedSample> data, Split split);

struct SplitMetrics {
  Split split = Split::test;
  std::size_t count = 0;
  Prf macro;
  std::optional<Prf> positive;  // binary tasks, at the calibrated threshold
  std::optional<double> auprc;
  double accuracy = 0;
};

struct SeedEvaluation {
  std::uint64_t seed = 0;
  std::optional<CalibratedThreshold> threshold;  // binary tasks
  std::vector<SplitMetrics> splits;              // every non-empty evaluated split
};

/// Binary tasks: tau* is fitted on validation scores and reused unchanged on
/// test and test_ood. Multi-class: argmax predictions.
SeedEvaluation evaluate_model(const Classifier<float>& model, Task task,
                              const std::map<Split, std::vector<GraphExample>>& data, int batch_size,
                              std::uint64_t seed);

std::string evaluation_json(std::span<const SeedEvaluation> runs);

/// Table rows "metric: mean (std)" per split, one block per split.
std::string evaluation_table(std::span<const SeedEvaluation> runs, Task task);

}  // namespace plmgnn
