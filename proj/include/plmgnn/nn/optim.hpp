#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "plmgnn/nn/module.hpp"

namespace plmgnn::nn {

struct AdamWConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.0;  // decoupled
};

/// First/second moment accumulators, one pair per parameter.
template <typename S>
struct OptimState {
  std::vector<Mat<S>> m;
  std::vector<Mat<S>> v;
  std::uint64_t step = 0;
};

template <typename S>
OptimState<S> make_optim_state(const ParameterSet<S>& params) {
  OptimState<S> st;
  for (const auto& [_, p] : params) {
    st.m.push_back(Mat<S>::Zero(p.rows(), p.cols()));
    st.v.push_back(Mat<S>::Zero(p.rows(), p.cols()));
  }
  return st;
}

/// One AdamW update:
///   m <- b1 m + (1-b1) g,  v <- b2 v + (1-b2) g^2
///   theta <- theta - lr * mhat / (sqrt(vhat) + eps) - lr * wd * theta
/// Non-finite gradients abort the step before any parameter changes.
template <typename S>
void opt_step(ParameterSet<S>& params, OptimState<S>& st, const AdamWConfig& cfg, double lr) {
  if (st.m.size() != params.size())
    throw Error(ErrorCode::dimension_mismatch, "optimizer state does not match parameters");
  std::vector<Mat<S>> grads;
  grads.reserve(params.size());
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto& [name, p] = params[i];
    grads.push_back(p.grad());
    if (!grads.back().allFinite())
      throw Error(ErrorCode::non_finite, "gradient of '" + name + "' contains NaN/Inf");
    if (st.m[i].rows() != p.rows() || st.m[i].cols() != p.cols())
      throw Error(ErrorCode::dimension_mismatch, "moment shape differs for '" + name + "'");
  }
  ++st.step;
  const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(st.step));
  const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(st.step));
  const S b1 = static_cast<S>(cfg.beta1), b2 = static_cast<S>(cfg.beta2);
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto& theta = params[i].second.mutable_value();
    const auto& g = grads[i];
    st.m[i] = b1 * st.m[i] + (S(1) - b1) * g;
    st.v[i] = b2 * st.v[i] + (S(1) - b2) * g.cwiseProduct(g);
    const auto mhat = (st.m[i].array() / static_cast<S>(bc1));
    const auto vhat = (st.v[i].array() / static_cast<S>(bc2));
    Mat<S> update = (mhat / (vhat.sqrt() + static_cast<S>(cfg.eps))).matrix();
    const S decay = static_cast<S>(lr * cfg.weight_decay);
    theta = theta - static_cast<S>(lr) * update - decay * theta;
  }
}

struct OneCycle {
  double lr_max = 1e-4;
  double div_factor = 100.0;
  double final_div_factor = 1e4;
  double pct_start = 0.15;
  bool linear_warmup = false;
};

/// Learning rate at step t of T. Warm-up (t < pct_start*T) rises from
/// lr_max/div to lr_max; annealing falls to lr_max/(div*final_div). Both
/// phases use cosine interpolation unless linear_warmup is set.
double one_cycle_lr(double t, double total, const OneCycle& sched);

}  // namespace plmgnn::nn
