#pragma once

#include "plmgnn/config.hpp"
#include "plmgnn/nn/module.hpp"

namespace plmgnn {

/// Projects semantic, positional and node-type features to a shared width
/// and fuses them. With the semantic branch disabled its projection is a
/// zero block, so the output does not depend on h_v.
template <typename S>
class Fusion {
 public:
  Fusion() = default;
  Fusion(const ModelConfig& cfg, std::mt19937_64& rng)
      : strategy_(cfg.fusion), semantic_enabled_(cfg.semantic_enabled), d_f_(cfg.fusion_dim) {
    if (semantic_enabled_) sem_ = nn::Linear<S>(cfg.semantic_dim, d_f_, rng);
    pos_ = nn::Linear<S>(cfg.pe_dim, d_f_, rng);
    type_table_ = nn::Embedding<S>(cfg.type_vocab, cfg.type_dim, rng);
    type_ = nn::Linear<S>(cfg.type_dim, d_f_, rng);
    if (strategy_ == FusionStrategy::gated_sum) gate_ = nn::Linear<S>(3 * d_f_, 3 * d_f_, rng);
  }

  nn::Index out_dim() const { return strategy_ == FusionStrategy::concat ? 3 * d_f_ : d_f_; }
  FusionStrategy strategy() const { return strategy_; }
  bool semantic_enabled() const { return semantic_enabled_; }

  /// `semantic` may be undefined when the semantic branch is disabled.
  nn::Var<S> operator()(const nn::Var<S>& semantic, const nn::Var<S>& pe,
                        std::shared_ptr<const nn::IndexList> type_ids) const {
    const auto n = pe.rows();
    if (static_cast<nn::Index>(type_ids->size()) != n)
      throw Error(ErrorCode::dimension_mismatch, "one type id per node");
    if (pe.cols() != pos_.in_features())
      throw Error(ErrorCode::dimension_mismatch, "positional width differs from configuration");
    for (int t : *type_ids)
      if (t < 0 || t >= type_table_.table.rows())
        throw Error(ErrorCode::invalid_argument, "type id outside vocabulary");

    nn::Var<S> h_t;
    if (semantic_enabled_) {
      if (!semantic.defined() || semantic.rows() != n || semantic.cols() != sem_.in_features())
        throw Error(ErrorCode::dimension_mismatch, "semantic features do not match configuration");
      h_t = sem_(semantic);
    } else {
      h_t = nn::constant<S>(nn::Mat<S>::Zero(n, d_f_));
    }
    auto p_t = pos_(pe);
    auto q_t = type_(type_table_(type_ids));
    return combine(h_t, p_t, q_t);
  }

  /// Fusion of already-projected modalities.
  nn::Var<S> combine(const nn::Var<S>& h_t, const nn::Var<S>& p_t, const nn::Var<S>& q_t) const {
    switch (strategy_) {
      case FusionStrategy::concat:
        return nn::concat_cols<S>({h_t, p_t, q_t});
      case FusionStrategy::sum:
        return h_t + p_t + q_t;
      case FusionStrategy::gated_sum: {
        auto g = nn::sigmoid(gate_(nn::concat_cols<S>({h_t, p_t, q_t})));
        auto parts = nn::split_cols(g, 3);
        return parts[0] * h_t + parts[1] * p_t + parts[2] * q_t;
      }
    }
    return h_t;
  }

  void collect(nn::ParameterSet<S>& ps, const std::string& prefix) const {
    if (semantic_enabled_) sem_.collect(ps, prefix + ".sem");
    pos_.collect(ps, prefix + ".pos");
    type_table_.collect(ps, prefix + ".type_embed");
    type_.collect(ps, prefix + ".type");
    if (strategy_ == FusionStrategy::gated_sum) gate_.collect(ps, prefix + ".gate");
  }

  nn::Linear<S>& gate() { return gate_; }
  nn::Linear<S>& semantic_proj() { return sem_; }
  nn::Linear<S>& positional_proj() { return pos_; }
  nn::Linear<S>& type_proj() { return type_; }
  nn::Embedding<S>& type_table() { return type_table_; }

 private:
  FusionStrategy strategy_ = FusionStrategy::concat;
  bool semantic_enabled_ = false;
  nn::Index d_f_ = 0;
  nn::Linear<S> sem_, pos_, type_, gate_;
  nn::Embedding<S> type_table_;
};

}  // namespace plmgnn
