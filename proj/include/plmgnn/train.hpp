#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "plmgnn/config.hpp"
#include "plmgnn/gnn_layers.hpp"
#include "plmgnn/graph_batch.hpp"
#include "plmgnn/nn/checkpoint.hpp"

namespace plmgnn {

/// w_c = N / (K * N_c). Throws empty_class when some class has no samples.
std::vector<double> class_weights(std::span<const int> labels, int num_classes);

/// Permutation of [0, n) used as the mini-batch order of one epoch. Depends
/// only on (seed, epoch).
std::vector<std::size_t> epoch_order(std::size_t n, std::uint64_t seed, int epoch);

struct HistoryRecord {
  int epoch = 0;
  std::string split;   // "train" or "val"
  std::string metric;  // "loss" for train rows, the selection metric for val rows
  double value = 0;
  double lr = 0;
  double wall_time = 0;  // seconds since the start of the run
};

/// JSON-lines rendering. Wall time is the only run-dependent field and can be left out.
std::string history_jsonl(std::span<const HistoryRecord> history, bool with_wall_time = true);

struct TrainResult {
  nn::Checkpoint best;  // parameters at the best validation epoch (initial ones if no epochs ran)
  int best_epoch = 0;   // 0 = initialization
  double best_value = 0;
  std::vector<HistoryRecord> history;
};

struct Predictions {
  Eigen::MatrixXd probs;  // samples x classes
  std::vector<int> labels;
  std::vector<std::string> sample_ids;

  std::vector<int> argmax() const;
  std::vector<double> positive_scores() const;  // column 1
};

/// Softmax outputs in dataset order, no gradient tracking.
Predictions predict(const Classifier<float>& model, std::span<const GraphExample> data, int batch_size);

/// Value of a selection metric: "f1" (macro), "accuracy" or "auprc" (binary).
double selection_value(const std::string& metric, const Predictions& p, int num_classes);

/// Fixed-epoch training with AdamW and the one-cycle schedule; keeps the
/// checkpoint with the best validation metric (earliest on ties).
TrainResult train_model(const ModelConfig& cfg, const TrainProtocol& protocol, std::span<const GraphExample> train,
                        std::span<const GraphExample> val, std::uint64_t seed);

/// Checkpoint metadata: model config plus the seed and best epoch.
std::string checkpoint_metadata(const ModelConfig& cfg, std::uint64_t seed, int best_epoch);

/// Rebuilds a float model from a checkpoint written by train_model.
std::unique_ptr<Classifier<float>> load_classifier(const nn::Checkpoint& ck);

}  // namespace plmgnn
