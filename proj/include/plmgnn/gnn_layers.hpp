#pragma once

#include <cmath>
#include <memory>
#include <string>
#include <vector>

#include "plmgnn/config.hpp"
#include "plmgnn/fusion.hpp"
#include "plmgnn/graph_batch.hpp"
#include "plmgnn/nn/module.hpp"

namespace plmgnn {

/// One message-passing layer over the batch's A + I neighbourhoods.
template <typename S>
class GraphConv {
 public:
  virtual ~GraphConv() = default;
  virtual nn::Var<S> forward(const nn::Var<S>& x, const GraphBatch& batch) const = 0;
  virtual void collect(nn::ParameterSet<S>& ps, const std::string& prefix) const = 0;
};

/// X' = D^-1/2 (A + I) D^-1/2 X W + b
template <typename S>
class GcnConv final : public GraphConv<S> {
 public:
  GcnConv(nn::Index in, nn::Index out, std::mt19937_64& rng)
      : lin_(in, out, rng, false), bias_(nn::parameter<S>(nn::Mat<S>::Zero(1, out))) {}

  nn::Var<S> forward(const nn::Var<S>& x, const GraphBatch& batch) const override {
    if (x.cols() != lin_.in_features()) throw Error(ErrorCode::dimension_mismatch, "gcn input width");
    return nn::sparse_matmul(batch.gcn<S>(), lin_(x)) + bias_;
  }
  void collect(nn::ParameterSet<S>& ps, const std::string& prefix) const override {
    lin_.collect(ps, prefix + ".lin");
    ps.add(prefix + ".bias", bias_);
  }

  nn::Linear<S>& lin() { return lin_; }
  nn::Var<S>& bias() { return bias_; }

 private:
  nn::Linear<S> lin_;
  nn::Var<S> bias_;
};

/// Multi-head graph attention. For target u and neighbour v (self included):
/// e_uv = LeakyReLU_0.2(a_dst . W x_u + a_src . W x_v), alpha = softmax_v(e_uv),
/// out_u = concat_h sum_v alpha_uv W x_v + b.
template <typename S>
class GatConv final : public GraphConv<S> {
 public:
  GatConv(nn::Index in, nn::Index out, nn::Index heads, std::mt19937_64& rng)
      : heads_(heads),
        lin_(in, out, rng, false),
        att_src_(nn::parameter<S>(nn::kaiming_uniform<S>(out / heads, 1, out, rng))),
        att_dst_(nn::parameter<S>(nn::kaiming_uniform<S>(out / heads, 1, out, rng))),
        bias_(nn::parameter<S>(nn::Mat<S>::Zero(1, out))) {
    if (heads < 1 || out % heads != 0) throw Error(ErrorCode::dimension_mismatch, "width % heads != 0");
  }

  nn::Var<S> forward(const nn::Var<S>& x, const GraphBatch& batch) const override {
    if (x.cols() != lin_.in_features()) throw Error(ErrorCode::dimension_mismatch, "gat input width");
    const auto n = x.rows();
    auto z = lin_(x);
    auto s_src = nn::head_dot(z, att_src_, heads_);
    auto s_dst = nn::head_dot(z, att_dst_, heads_);
    auto logits = nn::leaky_relu(nn::gather_rows(s_dst, batch.msg_dst) + nn::gather_rows(s_src, batch.msg_src),
                                 S(0.2));
    auto alpha = nn::segment_softmax(logits, batch.msg_dst, n);
    auto msgs = nn::head_scale(nn::gather_rows(z, batch.msg_src), alpha, heads_);
    return nn::segment_sum(msgs, batch.msg_dst, n) + bias_;
  }
  void collect(nn::ParameterSet<S>& ps, const std::string& prefix) const override {
    lin_.collect(ps, prefix + ".lin");
    ps.add(prefix + ".att_src", att_src_);
    ps.add(prefix + ".att_dst", att_dst_);
    ps.add(prefix + ".bias", bias_);
  }

  nn::Index heads() const { return heads_; }
  nn::Linear<S>& lin() { return lin_; }
  nn::Var<S>& att_src() { return att_src_; }
  nn::Var<S>& att_dst() { return att_dst_; }
  nn::Var<S>& bias() { return bias_; }

 private:
  nn::Index heads_;
  nn::Linear<S> lin_;
  nn::Var<S> att_src_, att_dst_, bias_;
};

/// Transformer-style attention restricted to A + I neighbourhoods:
/// alpha_uv = softmax_v(q_u . k_v / sqrt(d_head)), out = W_O concat_h sum_v alpha_uv v_v.
template <typename S>
class TransformerConv final : public GraphConv<S> {
 public:
  TransformerConv(nn::Index in, nn::Index out, nn::Index heads, std::mt19937_64& rng)
      : heads_(heads),
        q_(in, out, rng, false),
        k_(in, out, rng, false),
        v_(in, out, rng, false),
        o_(out, out, rng, true) {
    if (heads < 1 || out % heads != 0) throw Error(ErrorCode::dimension_mismatch, "width % heads != 0");
  }

  nn::Var<S> forward(const nn::Var<S>& x, const GraphBatch& batch) const override {
    if (x.cols() != q_.in_features()) throw Error(ErrorCode::dimension_mismatch, "tgnn input width");
    const auto n = x.rows();
    const S inv_sqrt_d = S(1) / std::sqrt(static_cast<S>(q_.out_features() / heads_));
    auto q = nn::gather_rows(q_(x), batch.msg_dst);
    auto k = nn::gather_rows(k_(x), batch.msg_src);
    auto v = nn::gather_rows(v_(x), batch.msg_src);
    auto logits = nn::scale(nn::head_rowdot(q, k, heads_), inv_sqrt_d);
    auto alpha = nn::segment_softmax(logits, batch.msg_dst, n);
    auto agg = nn::segment_sum(nn::head_scale(v, alpha, heads_), batch.msg_dst, n);
    return o_(agg);
  }
  void collect(nn::ParameterSet<S>& ps, const std::string& prefix) const override {
    q_.collect(ps, prefix + ".q");
    k_.collect(ps, prefix + ".k");
    v_.collect(ps, prefix + ".v");
    o_.collect(ps, prefix + ".out");
  }

  nn::Index heads() const { return heads_; }
  nn::Linear<S>& query() { return q_; }
  nn::Linear<S>& key() { return k_; }
  nn::Linear<S>& value() { return v_; }
  nn::Linear<S>& output() { return o_; }

 private:
  nn::Index heads_;
  nn::Linear<S> q_, k_, v_, o_;
};

template <typename S>
std::unique_ptr<GraphConv<S>> make_conv(Backbone kind, nn::Index in, nn::Index out, nn::Index heads,
                                        std::mt19937_64& rng) {
  switch (kind) {
    case Backbone::gcn: return std::make_unique<GcnConv<S>>(in, out, rng);
    case Backbone::gat: return std::make_unique<GatConv<S>>(in, out, heads, rng);
    case Backbone::tgnn: return std::make_unique<TransformerConv<S>>(in, out, heads, rng);
    case Backbone::mlp_baseline: break;
  }
  throw Error(ErrorCode::invalid_argument, "backbone has no message-passing layer");
}

inline constexpr double kNormEps = 1e-5;

/// layer_norm: per-node standardization over features, then gain and bias.
/// graph_norm: per-graph, per-channel
///   x' = gamma * (x - alpha * mu) / sqrt(var(x - alpha * mu) + eps) + beta.
template <typename S>
class Normalization {
 public:
  Normalization() = default;
  Normalization(NormKind kind, nn::Index width) : kind_(kind) {
    scale_ = nn::parameter<S>(nn::Mat<S>::Ones(1, width));
    shift_ = nn::parameter<S>(nn::Mat<S>::Zero(1, width));
    if (kind_ == NormKind::graph_norm) mean_scale_ = nn::parameter<S>(nn::Mat<S>::Ones(1, width));
  }

  nn::Var<S> forward(const nn::Var<S>& x, const GraphBatch& batch) const {
    const auto eps = nn::scalar<S>(static_cast<S>(kNormEps));
    if (kind_ == NormKind::layer_norm) {
      auto centered = x - nn::row_mean(x);
      auto sd = nn::sqrt(nn::row_mean(nn::square(centered)) + eps);
      return centered / sd * scale_ + shift_;
    }
    const auto g = batch.num_graphs;
    auto mu = nn::gather_rows(nn::segment_mean(x, batch.membership, g), batch.membership);
    auto centered = x - mu * mean_scale_;
    auto var = nn::segment_mean(nn::square(centered), batch.membership, g);
    auto sd = nn::gather_rows(nn::sqrt(var + eps), batch.membership);
    return scale_ * centered / sd + shift_;
  }

  void collect(nn::ParameterSet<S>& ps, const std::string& prefix) const {
    ps.add(prefix + ".weight", scale_);
    ps.add(prefix + ".bias", shift_);
    if (kind_ == NormKind::graph_norm) ps.add(prefix + ".mean_scale", mean_scale_);
  }

  NormKind kind() const { return kind_; }
  nn::Var<S>& scale() { return scale_; }
  nn::Var<S>& shift() { return shift_; }
  nn::Var<S>& mean_scale() { return mean_scale_; }

 private:
  NormKind kind_ = NormKind::layer_norm;
  nn::Var<S> scale_, shift_, mean_scale_;
};

/// Graph readout. Attentional: s_v = w . tanh(W_a x_v), alpha = softmax over
/// the graph's nodes, out = sum_v alpha_v x_v.
template <typename S>
class GraphPool {
 public:
  GraphPool() = default;
  GraphPool(PoolKind kind, nn::Index width, std::mt19937_64& rng) : kind_(kind) {
    if (kind_ == PoolKind::attentional) {
      proj_ = nn::Linear<S>(width, width, rng, false);
      score_ = nn::parameter<S>(nn::kaiming_uniform<S>(width, width, 1, rng));
    }
  }

  nn::Var<S> forward(const nn::Var<S>& x, const GraphBatch& batch) const {
    const auto g = batch.num_graphs;
    switch (kind_) {
      case PoolKind::sum: return nn::segment_sum(x, batch.membership, g);
      case PoolKind::max: return nn::segment_max(x, batch.membership, g);
      case PoolKind::attentional: {
        auto s = nn::matmul(nn::tanh(proj_(x)), score_);
        auto alpha = nn::segment_softmax(s, batch.membership, g);
        return nn::segment_sum(x * alpha, batch.membership, g);
      }
    }
    return x;
  }

  void collect(nn::ParameterSet<S>& ps, const std::string& prefix) const {
    if (kind_ == PoolKind::attentional) {
      proj_.collect(ps, prefix + ".proj");
      ps.add(prefix + ".score", score_);
    }
  }

  PoolKind kind() const { return kind_; }
  nn::Linear<S>& proj() { return proj_; }
  nn::Var<S>& score() { return score_; }

 private:
  PoolKind kind_ = PoolKind::sum;
  nn::Linear<S> proj_;
  nn::Var<S> score_;
};

/// Stack of affine layers with activation and dropout between them; the last
/// layer produces logits. depth = number of affine layers.
template <typename S>
class Mlp {
 public:
  Mlp() = default;
  Mlp(nn::Index in, nn::Index hidden, nn::Index out, int depth, nn::Activation act, double dropout,
      std::mt19937_64& rng)
      : act_(act), dropout_(dropout) {
    nn::Index width = in;
    for (int i = 0; i < depth; ++i) {
      const nn::Index next = i + 1 == depth ? out : hidden;
      layers_.emplace_back(width, next, rng);
      width = next;
    }
  }

  nn::Var<S> forward(const nn::Var<S>& x, bool training, std::mt19937_64& rng) const {
    auto h = x;
    for (std::size_t i = 0; i < layers_.size(); ++i) {
      h = layers_[i](h);
      if (i + 1 < layers_.size()) h = nn::dropout(nn::activate(h, act_), dropout_, training, rng);
    }
    return h;
  }

  void collect(nn::ParameterSet<S>& ps, const std::string& prefix) const {
    for (std::size_t i = 0; i < layers_.size(); ++i)
      layers_[i].collect(ps, prefix + "." + std::to_string(i));
  }

  std::vector<nn::Linear<S>>& layers() { return layers_; }

 private:
  nn::Activation act_ = nn::Activation::relu;
  double dropout_ = 0.0;
  std::vector<nn::Linear<S>> layers_;
};

/// Common interface of every trainable classifier: batch in, logits out.
template <typename S>
class Classifier {
 public:
  virtual ~Classifier() = default;
  virtual nn::Var<S> forward(const GraphBatch& batch, bool training, std::mt19937_64& rng) const = 0;
  virtual nn::ParameterSet<S> parameters() const = 0;
};

/// fusion -> L x (conv -> norm -> activation -> dropout) -> pool -> linear.
/// No residual connections: each layer sees only the previous layer's output.
template <typename S>
class GraphClassifier final : public Classifier<S> {
 public:
  GraphClassifier(const ModelConfig& cfg, std::mt19937_64& rng) : cfg_(cfg) {
    cfg.validate();
    fusion_ = Fusion<S>(cfg, rng);
    nn::Index width = fusion_.out_dim();
    for (int l = 0; l < cfg.layers; ++l) {
      convs_.push_back(make_conv<S>(cfg.backbone, width, cfg.hidden, cfg.heads, rng));
      norms_.emplace_back(cfg.norm, cfg.hidden);
      width = cfg.hidden;
    }
    pool_ = GraphPool<S>(cfg.pooling, cfg.hidden, rng);
    head_ = nn::Linear<S>(cfg.hidden, cfg.num_classes, rng);
  }

  /// Node representations after the message-passing stack.
  nn::Var<S> encode(const GraphBatch& batch, bool training, std::mt19937_64& rng) const {
    nn::Var<S> semantic;
    if (cfg_.semantic_enabled) semantic = nn::constant<S>(batch.semantic);
    auto x = fusion_(semantic, nn::constant<S>(batch.pe), batch.type_ids);
    for (std::size_t l = 0; l < convs_.size(); ++l) {
      x = convs_[l]->forward(x, batch);
      x = norms_[l].forward(x, batch);
      x = nn::activate(x, cfg_.activation);
      x = nn::dropout(x, cfg_.dropout, training, rng);
    }
    return x;
  }

  nn::Var<S> forward(const GraphBatch& batch, bool training, std::mt19937_64& rng) const override {
    return head_(pool_.forward(encode(batch, training, rng), batch));
  }

  nn::ParameterSet<S> parameters() const override {
    nn::ParameterSet<S> ps;
    fusion_.collect(ps, "fusion");
    for (std::size_t l = 0; l < convs_.size(); ++l) {
      convs_[l]->collect(ps, "conv" + std::to_string(l));
      norms_[l].collect(ps, "norm" + std::to_string(l));
    }
    pool_.collect(ps, "pool");
    head_.collect(ps, "head");
    return ps;
  }

  const ModelConfig& config() const { return cfg_; }
  Fusion<S>& fusion() { return fusion_; }
  GraphConv<S>& conv(std::size_t l) { return *convs_[l]; }
  Normalization<S>& norm(std::size_t l) { return norms_[l]; }
  GraphPool<S>& pool() { return pool_; }
  nn::Linear<S>& head() { return head_; }

 private:
  ModelConfig cfg_;
  Fusion<S> fusion_;
  std::vector<std::unique_ptr<GraphConv<S>>> convs_;
  std::vector<Normalization<S>> norms_;
  GraphPool<S> pool_;
  nn::Linear<S> head_;
};

/// Frozen-embedding baseline: an MLP over the per-sample mean of valid
/// token embeddings.
template <typename S>
class MlpBaseline final : public Classifier<S> {
 public:
  MlpBaseline(const ModelConfig& cfg, std::mt19937_64& rng)
      : mlp_(cfg.semantic_dim, cfg.mlp_hidden, cfg.num_classes, cfg.mlp_depth, cfg.activation, cfg.dropout,
             rng) {
    cfg.validate();
  }

  nn::Var<S> forward(const GraphBatch& batch, bool training, std::mt19937_64& rng) const override {
    if (batch.pooled.rows() != batch.num_graphs)
      throw Error(ErrorCode::degenerate_sample, "batch has no pooled embeddings");
    return mlp_.forward(nn::constant<S>(batch.pooled), training, rng);
  }

  nn::Var<S> forward_pooled(const nn::Var<S>& pooled, bool training, std::mt19937_64& rng) const {
    return mlp_.forward(pooled, training, rng);
  }

  nn::ParameterSet<S> parameters() const override {
    nn::ParameterSet<S> ps;
    mlp_.collect(ps, "mlp");
    return ps;
  }

  Mlp<S>& mlp() { return mlp_; }

 private:
  Mlp<S> mlp_;
};

template <typename S>
std::unique_ptr<Classifier<S>> make_classifier(const ModelConfig& cfg, std::mt19937_64& rng) {
  if (cfg.backbone == Backbone::mlp_baseline) return std::make_unique<MlpBaseline<S>>(cfg, rng);
  return std::make_unique<GraphClassifier<S>>(cfg, rng);
}

}  // namespace plmgnn
