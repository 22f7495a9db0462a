#include "plmgnn/train.hpp"

#include <json.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>
#include <random>
#include <sstream>

#include "plmgnn/error.hpp"
#include "plmgnn/eval.hpp"
#include "plmgnn/nn/optim.hpp"
#include "plmgnn/spectral.hpp"

namespace plmgnn {
namespace {

using nlohmann::json;
using Clock = std::chrono::steady_clock;

GraphBatch batch_of(std::span<const GraphExample> data, std::span<const std::size_t> idx) {
  std::vector<const GraphExample*> ptrs;
  ptrs.reserve(idx.size());
  for (auto i : idx) ptrs.push_back(&data[i]);
  return make_batch(std::span<const GraphExample* const>(ptrs));
}

void flip_pe_signs(GraphBatch& b, std::mt19937_64& rng) {
  Eigen::Index start = 0;
  const auto& member = *b.membership;
  for (Eigen::Index v = 1; v <= b.num_nodes; ++v) {
    if (v == b.num_nodes || member[v] != member[start]) {
      random_sign_flip(b.pe.middleRows(start, v - start), rng);
      start = v;
    }
  }
}

}  // namespace

std::vector<double> class_weights(std::span<const int> labels, int num_classes) {
  std::vector<double> count(static_cast<std::size_t>(num_classes), 0.0);
  for (int y : labels) {
    if (y < 0 || y >= num_classes) throw Error(ErrorCode::invalid_argument, "label outside 0..K-1");
    count[y] += 1;
  }
  std::vector<double> w(count.size());
  const double n = static_cast<double>(labels.size());
  for (int c = 0; c < num_classes; ++c) {
    if (count[c] == 0) throw Error(ErrorCode::empty_class, "class " + std::to_string(c) + " has no samples");
    w[c] = n / (num_classes * count[c]);
  }
  return w;
}

std::vector<std::size_t> epoch_order(std::size_t n, std::uint64_t seed, int epoch) {
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(epoch), 0x5eedu};
  std::mt19937_64 rng(seq);
  std::shuffle(order.begin(), order.end(), rng);
  return order;
}

std::string history_jsonl(std::span<const HistoryRecord> history, bool with_wall_time) {
  std::string out;
  for (const auto& r : history) {
    json j{{"epoch", r.epoch}, {"split", r.split}, {"metric", r.metric}, {"value", r.value}, {"lr", r.lr}};
    if (with_wall_time) j["wall_time"] = r.wall_time;
    out += j.dump() + "\n";
  }
  return out;
}

std::vector<int> Predictions::argmax() const {
  std::vector<int> out(static_cast<std::size_t>(probs.rows()));
  for (Eigen::Index i = 0; i < probs.rows(); ++i) probs.row(i).maxCoeff(&out[i]);
  return out;
}

std::vector<double> Predictions::positive_scores() const {
  if (probs.cols() < 2) throw Error(ErrorCode::dimension_mismatch, "positive scores need 2 classes");
  std::vector<double> out(static_cast<std::size_t>(probs.rows()));
  for (Eigen::Index i = 0; i < probs.rows(); ++i) out[i] = probs(i, 1);
  return out;
}

Predictions predict(const Classifier<float>& model, std::span<const GraphExample> data, int batch_size) {
  nn::NoGradGuard guard;
  std::mt19937_64 unused(0);
  Predictions p;
  std::vector<Eigen::MatrixXd> parts;
  Eigen::Index cols = 0;
  for (std::size_t start = 0; start < data.size(); start += static_cast<std::size_t>(batch_size)) {
    const auto count = std::min<std::size_t>(static_cast<std::size_t>(batch_size), data.size() - start);
    auto batch = make_batch(data.subspan(start, count));
    const Eigen::MatrixXd logits = model.forward(batch, false, unused).value().cast<double>();
    parts.push_back(nn::softmax_rows<double>(logits));
    cols = logits.cols();
    p.labels.insert(p.labels.end(), batch.labels.begin(), batch.labels.end());
    p.sample_ids.insert(p.sample_ids.end(), batch.sample_ids.begin(), batch.sample_ids.end());
  }
  p.probs.resize(static_cast<Eigen::Index>(data.size()), cols);
  Eigen::Index row = 0;
  for (const auto& part : parts) {
    p.probs.middleRows(row, part.rows()) = part;
    row += part.rows();
  }
  return p;
}

double selection_value(const std::string& metric, const Predictions& p, int num_classes) {
  if (metric == "auprc") return auprc(p.labels, p.positive_scores());
  const auto pred = p.argmax();
  if (metric == "accuracy") return accuracy(p.labels, pred);
  if (metric == "f1") return macro_prf(p.labels, pred, num_classes).f1;
  throw Error(ErrorCode::invalid_argument, "unknown selection metric '" + metric + "'");
}

std::string checkpoint_metadata(const ModelConfig& cfg, std::uint64_t seed, int best_epoch) {
  json j{{"model", json::parse(cfg.to_json())}, {"seed", seed}, {"best_epoch", best_epoch}};
  return j.dump();
}

std::unique_ptr<Classifier<float>> load_classifier(const nn::Checkpoint& ck) {
  json meta;
  try {
    meta = json::parse(ck.metadata);
  } catch (const json::exception& e) {
    throw Error(ErrorCode::format, std::string("checkpoint metadata: ") + e.what());
  }
  if (!meta.contains("model")) throw Error(ErrorCode::format, "checkpoint metadata has no model config");
  auto cfg = ModelConfig::from_json(meta.at("model").dump());
  std::mt19937_64 rng(0);
  auto model = make_classifier<float>(cfg, rng);
  auto ps = model->parameters();
  nn::restore_parameters(ck, ps);
  return model;
}

TrainResult train_model(const ModelConfig& cfg, const TrainProtocol& protocol, std::span<const GraphExample> train,
                        std::span<const GraphExample> val, std::uint64_t seed) {
  cfg.validate();
  protocol.validate();
  std::mt19937_64 init_rng(seed);
  auto model = make_classifier<float>(cfg, init_rng);
  auto params = model->parameters();
  auto state = nn::make_optim_state(params);

  TrainResult result;
  result.best = nn::make_checkpoint(params, &state, checkpoint_metadata(cfg, seed, 0));
  if (protocol.epochs == 0) return result;
  if (train.empty()) throw Error(ErrorCode::empty_split, "training split is empty");
  if (val.empty()) throw Error(ErrorCode::empty_split, "validation split is empty");

  std::vector<int> train_labels;
  for (const auto& ex : train) train_labels.push_back(ex.label);
  const auto weights = (protocol.class_weighting || cfg.class_weighting) ? class_weights(train_labels, cfg.num_classes) : std::vector<double>{};

  const auto bs = static_cast<std::size_t>(protocol.batch_size);
  const std::size_t steps_per_epoch = (train.size() + bs - 1) / bs;
  const double total_steps = static_cast<double>(steps_per_epoch) * protocol.epochs;
  const nn::OneCycle sched{protocol.lr_max, protocol.div_factor, protocol.final_div_factor, protocol.pct_start,
                           protocol.linear_warmup};
  nn::AdamWConfig adam;
  adam.weight_decay = protocol.weight_decay;

  std::mt19937_64 dropout_rng(seed ^ 0x9e3779b97f4a7c15ull);
  std::mt19937_64 flip_rng(seed ^ 0xc2b2ae3d27d4eb4full);
  const auto start = Clock::now();
  auto elapsed = [&] { return std::chrono::duration<double>(Clock::now() - start).count(); };

  bool have_best = false;
  std::size_t step = 0;
  for (int epoch = 1; epoch <= protocol.epochs; ++epoch) {
    const auto order = epoch_order(train.size(), seed, epoch);
    double loss_sum = 0, weight_sum = 0, lr = 0;
    for (std::size_t b = 0; b < steps_per_epoch; ++b, ++step) {
      const auto first = b * bs;
      const auto count = std::min(bs, train.size() - first);
      auto batch = batch_of(train, std::span(order).subspan(first, count));
      if (protocol.pe_sign_flip) flip_pe_signs(batch, flip_rng);

      params.zero_grad();
      auto loss = nn::cross_entropy(model->forward(batch, true, dropout_rng), batch.labels, weights);
      const double value = loss.item();
      if (!std::isfinite(value))
        throw Error(ErrorCode::non_finite, "loss is not finite at epoch " + std::to_string(epoch) + ", batch " +
                                               std::to_string(b) + " (first sample " + batch.sample_ids.front() + ")");
      nn::backward(loss);
      lr = nn::one_cycle_lr(static_cast<double>(step), total_steps, sched);
      nn::opt_step(params, state, adam, lr);
      loss_sum += value * static_cast<double>(count);
      weight_sum += static_cast<double>(count);
    }
    result.history.push_back({epoch, "train", "loss", loss_sum / weight_sum, lr, elapsed()});

    const auto preds = predict(*model, val, protocol.batch_size);
    const double metric = selection_value(protocol.selection_metric, preds, cfg.num_classes);
    result.history.push_back({epoch, "val", protocol.selection_metric, metric, lr, elapsed()});
    if (!have_best || metric > result.best_value) {
      have_best = true;
      result.best_value = metric;
      result.best_epoch = epoch;
      result.best = nn::make_checkpoint(params, &state, checkpoint_metadata(cfg, seed, epoch));
    }
  }
  return result;
}

}  // namespace plmgnn
