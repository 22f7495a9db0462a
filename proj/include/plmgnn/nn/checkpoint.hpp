#pragma once

#include <optional>
#include <string>
#include <vector>

#include "plmgnn/nn/optim.hpp"

namespace plmgnn::nn {

struct NamedTensor {
  std::string name;
  Mat<float> value;
};

/// Flat named-parameter archive ("PGCK"): metadata string, then per
/// parameter (name, rows, cols, f32 row-major payload), then optional
/// optimizer moments in parameter order. Little-endian throughout.
struct Checkpoint {
  std::string metadata;  // JSON, typically the model config
  std::vector<NamedTensor> params;
  std::optional<std::uint64_t> optim_step;
  std::vector<Mat<float>> optim_m;
  std::vector<Mat<float>> optim_v;

  std::string serialize() const;
  static Checkpoint deserialize(std::string_view bytes);

  void save(const std::string& path) const;
  static Checkpoint load(const std::string& path);
};

template <typename S>
Checkpoint make_checkpoint(const ParameterSet<S>& params, const OptimState<S>* state,
                           std::string metadata) {
  Checkpoint ck;
  ck.metadata = std::move(metadata);
  for (const auto& [name, v] : params) ck.params.push_back({name, v.value().template cast<float>()});
  if (state) {
    ck.optim_step = state->step;
    for (const auto& m : state->m) ck.optim_m.push_back(m.template cast<float>());
    for (const auto& v : state->v) ck.optim_v.push_back(v.template cast<float>());
  }
  return ck;
}

/// Copies stored values into `params`; names and shapes must match exactly.
template <typename S>
void restore_parameters(const Checkpoint& ck, ParameterSet<S>& params) {
  if (ck.params.size() != params.size())
    throw Error(ErrorCode::format, "checkpoint has " + std::to_string(ck.params.size()) +
                                       " parameters, model has " + std::to_string(params.size()));
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto& [name, v] = params[i];
    const auto& stored = ck.params[i];
    if (stored.name != name || stored.value.rows() != v.rows() || stored.value.cols() != v.cols())
      throw Error(ErrorCode::format, "checkpoint parameter '" + stored.name + "' does not match '" + name + "'");
    v.mutable_value() = stored.value.template cast<S>();
  }
}

}  // namespace plmgnn::nn
