#pragma once

#include <random>
#include <string>
#include <utility>
#include <vector>

#include "plmgnn/nn/tensor.hpp"

namespace plmgnn::nn {

/// Ordered, named list of trainable leaves. Order is registration order and
/// defines checkpoint layout.
template <typename S>
class ParameterSet {
 public:
  void add(std::string name, Var<S> v) { items_.emplace_back(std::move(name), std::move(v)); }

  std::size_t size() const { return items_.size(); }
  auto begin() { return items_.begin(); }
  auto end() { return items_.end(); }
  auto begin() const { return items_.begin(); }
  auto end() const { return items_.end(); }
  std::pair<std::string, Var<S>>& operator[](std::size_t i) { return items_[i]; }
  const std::pair<std::string, Var<S>>& operator[](std::size_t i) const { return items_[i]; }

  void zero_grad() {
    for (auto& [_, v] : items_) v.zero_grad();
  }
  Index numel() const {
    Index n = 0;
    for (const auto& [_, v] : items_) n += v.value().size();
    return n;
  }

 private:
  std::vector<std::pair<std::string, Var<S>>> items_;
};

/// U(-1/sqrt(fan_in), 1/sqrt(fan_in)), the usual fan-in scaled default.
template <typename S>
Mat<S> kaiming_uniform(Index fan_in, Index rows, Index cols, std::mt19937_64& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(std::max<Index>(fan_in, 1)));
  std::uniform_real_distribution<double> u(-bound, bound);
  Mat<S> m(rows, cols);
  for (Index i = 0; i < m.size(); ++i) m.data()[i] = static_cast<S>(u(rng));
  return m;
}

/// Affine map x W + b over rows.
template <typename S>
struct Linear {
  Var<S> weight;  // in x out
  Var<S> bias;    // 1 x out, undefined when bias is off

  Linear() = default;
  Linear(Index in, Index out, std::mt19937_64& rng, bool with_bias = true)
      : weight(parameter<S>(kaiming_uniform<S>(in, in, out, rng))) {
    if (with_bias) bias = parameter<S>(kaiming_uniform<S>(in, 1, out, rng));
  }

  Index in_features() const { return weight.rows(); }
  Index out_features() const { return weight.cols(); }

  Var<S> operator()(const Var<S>& x) const {
    auto y = matmul(x, weight);
    return bias.defined() ? add(y, bias) : y;
  }

  void collect(ParameterSet<S>& ps, const std::string& prefix) const {
    ps.add(prefix + ".weight", weight);
    if (bias.defined()) ps.add(prefix + ".bias", bias);
  }
};

/// Lookup table; row i is the embedding of id i.
template <typename S>
struct Embedding {
  Var<S> table;

  Embedding() = default;
  Embedding(Index count, Index dim, std::mt19937_64& rng) {
    std::normal_distribution<double> n(0.0, 1.0);
    Mat<S> m(count, dim);
    for (Index i = 0; i < m.size(); ++i) m.data()[i] = static_cast<S>(n(rng));
    table = parameter<S>(m);
  }

  Var<S> operator()(std::shared_ptr<const IndexList> ids) const { return gather_rows(table, ids); }

  void collect(ParameterSet<S>& ps, const std::string& prefix) const {
    ps.add(prefix + ".table", table);
  }
};

enum class Activation { relu, leaky_relu, gelu };

template <typename S>
Var<S> activate(const Var<S>& x, Activation a) {
  switch (a) {
    case Activation::relu: return relu(x);
    case Activation::leaky_relu: return leaky_relu(x, S(0.01));
    case Activation::gelu: return gelu(x);
  }
  return x;
}

}  // namespace plmgnn::nn
