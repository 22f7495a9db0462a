#pragma once

// Reverse-mode automatic differentiation over dense Eigen matrices.
//
// Every value is a 2-D matrix (scalars are 1x1). A Var owns a node of the
// computation graph; ops build new nodes whose backward closures accumulate
// into their parents. Float is the training scalar, double the verification
// scalar used by gradient checks.

#include <Eigen/Dense>
#include <Eigen/SparseCore>

#include <cmath>
#include <functional>
#include <limits>
#include <memory>
#include <random>
#include <span>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "plmgnn/error.hpp"

namespace plmgnn::nn {

template <typename S>
using Mat = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic>;

using Index = Eigen::Index;

template <typename S>
struct Node {
  Mat<S> value;
  Mat<S> grad;  // empty until something flows into it
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backward_fn;
  bool requires_grad = false;

  template <typename Derived>
  void accumulate(const Eigen::MatrixBase<Derived>& g) {
    if (grad.size() == 0)
      grad = g;
    else
      grad += g;
  }
};

namespace detail {
inline bool& grad_enabled_flag() {
  thread_local bool enabled = true;
  return enabled;
}
}  // namespace detail

/// Disables graph construction in its scope (inference).
class NoGradGuard {
 public:
  NoGradGuard() : prev_(detail::grad_enabled_flag()) { detail::grad_enabled_flag() = false; }
  ~NoGradGuard() { detail::grad_enabled_flag() = prev_; }
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool prev_;
};

inline bool grad_enabled() { return detail::grad_enabled_flag(); }

template <typename S>
class Var {
 public:
  using Scalar = S;

  Var() = default;
  explicit Var(std::shared_ptr<Node<S>> node) : node_(std::move(node)) {}

  const Mat<S>& value() const { return node_->value; }
  Mat<S>& mutable_value() { return node_->value; }
  Index rows() const { return node_->value.rows(); }
  Index cols() const { return node_->value.cols(); }
  bool requires_grad() const { return node_ && node_->requires_grad; }
  bool defined() const { return static_cast<bool>(node_); }

  /// Accumulated gradient; zeros when nothing reached this node.
  Mat<S> grad() const {
    if (node_->grad.size() == 0) return Mat<S>::Zero(rows(), cols());
    return node_->grad;
  }
  void zero_grad() { node_->grad.resize(0, 0); }

  S item() const {
    if (rows() != 1 || cols() != 1)
      throw Error(ErrorCode::dimension_mismatch, "item() needs a 1x1 value");
    return node_->value(0, 0);
  }

  const std::shared_ptr<Node<S>>& node() const { return node_; }

 private:
  std::shared_ptr<Node<S>> node_;
};

template <typename S, typename Derived>
Var<S> constant(const Eigen::MatrixBase<Derived>& value) {
  auto n = std::make_shared<Node<S>>();
  n->value = value.template cast<S>();
  return Var<S>(std::move(n));
}

template <typename S, typename Derived>
Var<S> parameter(const Eigen::MatrixBase<Derived>& value) {
  auto n = std::make_shared<Node<S>>();
  n->value = value.template cast<S>();
  n->requires_grad = true;
  return Var<S>(std::move(n));
}

template <typename S>
Var<S> scalar(S v) {
  Mat<S> m(1, 1);
  m(0, 0) = v;
  return constant<S>(m);
}

/// Creates the result node of an op. `fn(self)` reads self.grad and
/// accumulates into self.parents; it only runs when some parent needs a
/// gradient and grad mode is on.
template <typename S>
Var<S> make_result(Mat<S> value, std::vector<Var<S>> inputs, std::function<void(Node<S>&)> fn) {
  auto n = std::make_shared<Node<S>>();
  n->value = std::move(value);
  if (grad_enabled()) {
    for (const auto& in : inputs)
      if (in.requires_grad()) n->requires_grad = true;
    if (n->requires_grad) {
      n->parents.reserve(inputs.size());
      for (auto& in : inputs) n->parents.push_back(in.node());
      n->backward_fn = std::move(fn);
    }
  }
  return Var<S>(std::move(n));
}

/// Runs reverse-mode accumulation from a 1x1 loss. Each reachable node's
/// backward closure runs once, in reverse topological order.
template <typename S>
void backward(const Var<S>& loss) {
  if (loss.rows() != 1 || loss.cols() != 1)
    throw Error(ErrorCode::invalid_argument, "backward() needs a scalar loss");
  if (!loss.requires_grad()) return;

  // iterative post-order DFS; state 1 = on stack, 2 = finished
  std::vector<Node<S>*> order;
  std::unordered_map<Node<S>*, int> state;
  std::vector<std::pair<Node<S>*, std::size_t>> stack{{loss.node().get(), 0}};
  state[loss.node().get()] = 1;
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      Node<S>* p = node->parents[next++].get();
      if (!p->requires_grad) continue;
      auto& st = state[p];
      if (st == 1) throw Error(ErrorCode::invalid_argument, "cycle in computation graph");
      if (st == 0) {
        st = 1;
        stack.emplace_back(p, 0);
      }
    } else {
      state[node] = 2;
      order.push_back(node);
      stack.pop_back();
    }
  }

  loss.node()->accumulate(Mat<S>::Ones(1, 1));
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node<S>* n = *it;
    if (n->backward_fn && n->grad.size() != 0) n->backward_fn(*n);
  }
}

// ---------------------------------------------------------------------------
// Broadcasting helpers. Shapes broadcast when equal or when one side is 1.

namespace detail {

inline Index broadcast_dim(Index a, Index b) {
  if (a == b || b == 1) return a;
  if (a == 1) return b;
  throw Error(ErrorCode::dimension_mismatch,
              "cannot broadcast " + std::to_string(a) + " against " + std::to_string(b));
}

template <typename S>
Mat<S> expand(const Mat<S>& m, Index rows, Index cols) {
  if (m.rows() == rows && m.cols() == cols) return m;
  return m.replicate(rows / m.rows(), cols / m.cols());
}

template <typename S>
Mat<S> reduce_to(const Mat<S>& g, Index rows, Index cols) {
  if (g.rows() == rows && g.cols() == cols) return g;
  if (rows == 1 && cols == 1) return Mat<S>::Constant(1, 1, g.sum());
  if (rows == 1) return g.colwise().sum();
  return g.rowwise().sum();
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Linear algebra and elementwise binary ops

template <typename S>
Var<S> matmul(const Var<S>& a, const Var<S>& b) {
  if (a.cols() != b.rows())
    throw Error(ErrorCode::dimension_mismatch,
                "matmul " + std::to_string(a.rows()) + "x" + std::to_string(a.cols()) + " by " +
                    std::to_string(b.rows()) + "x" + std::to_string(b.cols()));
  Mat<S> out = a.value() * b.value();
  return make_result<S>(std::move(out), {a, b}, [](Node<S>& self) {
    auto& A = *self.parents[0];
    auto& B = *self.parents[1];
    if (A.requires_grad) A.accumulate(self.grad * B.value.transpose());
    if (B.requires_grad) B.accumulate(A.value.transpose() * self.grad);
  });
}

/// Constant sparse matrix times a variable: M X.
template <typename S>
Var<S> sparse_matmul(const Eigen::SparseMatrix<S>& m, const Var<S>& x) {
  if (m.cols() != x.rows()) throw Error(ErrorCode::dimension_mismatch, "sparse_matmul");
  Mat<S> out = m * x.value();
  auto mt = std::make_shared<Eigen::SparseMatrix<S>>(m.transpose());
  return make_result<S>(std::move(out), {x}, [mt](Node<S>& self) {
    self.parents[0]->accumulate(*mt * self.grad);
  });
}

template <typename S>
Var<S> add(const Var<S>& a, const Var<S>& b) {
  const Index r = detail::broadcast_dim(a.rows(), b.rows());
  const Index c = detail::broadcast_dim(a.cols(), b.cols());
  Mat<S> out = detail::expand(a.value(), r, c) + detail::expand(b.value(), r, c);
  return make_result<S>(std::move(out), {a, b}, [](Node<S>& self) {
    for (auto& p : self.parents)
      if (p->requires_grad) p->accumulate(detail::reduce_to(self.grad, p->value.rows(), p->value.cols()));
  });
}

template <typename S>
Var<S> sub(const Var<S>& a, const Var<S>& b) {
  const Index r = detail::broadcast_dim(a.rows(), b.rows());
  const Index c = detail::broadcast_dim(a.cols(), b.cols());
  Mat<S> out = detail::expand(a.value(), r, c) - detail::expand(b.value(), r, c);
  return make_result<S>(std::move(out), {a, b}, [](Node<S>& self) {
    auto& A = *self.parents[0];
    auto& B = *self.parents[1];
    if (A.requires_grad) A.accumulate(detail::reduce_to(self.grad, A.value.rows(), A.value.cols()));
    if (B.requires_grad)
      B.accumulate(-detail::reduce_to<S>(self.grad, B.value.rows(), B.value.cols()));
  });
}

template <typename S>
Var<S> mul(const Var<S>& a, const Var<S>& b) {
  const Index r = detail::broadcast_dim(a.rows(), b.rows());
  const Index c = detail::broadcast_dim(a.cols(), b.cols());
  Mat<S> ea = detail::expand(a.value(), r, c);
  Mat<S> eb = detail::expand(b.value(), r, c);
  Mat<S> out = ea.cwiseProduct(eb);
  return make_result<S>(std::move(out), {a, b}, [ea, eb](Node<S>& self) {
    auto& A = *self.parents[0];
    auto& B = *self.parents[1];
    if (A.requires_grad)
      A.accumulate(detail::reduce_to<S>(self.grad.cwiseProduct(eb), A.value.rows(), A.value.cols()));
    if (B.requires_grad)
      B.accumulate(detail::reduce_to<S>(self.grad.cwiseProduct(ea), B.value.rows(), B.value.cols()));
  });
}

template <typename S>
Var<S> div(const Var<S>& a, const Var<S>& b) {
  const Index r = detail::broadcast_dim(a.rows(), b.rows());
  const Index c = detail::broadcast_dim(a.cols(), b.cols());
  Mat<S> ea = detail::expand(a.value(), r, c);
  Mat<S> eb = detail::expand(b.value(), r, c);
  Mat<S> out = ea.cwiseQuotient(eb);
  return make_result<S>(out, {a, b}, [eb, out](Node<S>& self) {
    auto& A = *self.parents[0];
    auto& B = *self.parents[1];
    if (A.requires_grad)
      A.accumulate(
          detail::reduce_to<S>(self.grad.cwiseQuotient(eb), A.value.rows(), A.value.cols()));
    if (B.requires_grad) {
      Mat<S> gb = -self.grad.cwiseProduct(out).cwiseQuotient(eb);
      B.accumulate(detail::reduce_to<S>(gb, B.value.rows(), B.value.cols()));
    }
  });
}

template <typename S>
Var<S> scale(const Var<S>& a, S s) {
  Mat<S> out = a.value() * s;
  return make_result<S>(std::move(out), {a}, [s](Node<S>& self) {
    self.parents[0]->accumulate(self.grad * s);
  });
}

template <typename S>
Var<S> operator+(const Var<S>& a, const Var<S>& b) { return add(a, b); }
template <typename S>
Var<S> operator-(const Var<S>& a, const Var<S>& b) { return sub(a, b); }
template <typename S>
Var<S> operator*(const Var<S>& a, const Var<S>& b) { return mul(a, b); }
template <typename S>
Var<S> operator/(const Var<S>& a, const Var<S>& b) { return div(a, b); }

// ---------------------------------------------------------------------------
// Elementwise unary ops. `df(x, y)` is the derivative at input x with output y.

template <typename S, typename F, typename DF>
Var<S> map_unary(const Var<S>& a, F f, DF df) {
  Mat<S> out = a.value().unaryExpr(f);
  return make_result<S>(out, {a}, [df, out](Node<S>& self) {
    const auto& x = self.parents[0]->value;
    Mat<S> g = self.grad;
    for (Index i = 0; i < g.size(); ++i) g.data()[i] *= df(x.data()[i], out.data()[i]);
    self.parents[0]->accumulate(g);
  });
}

template <typename S>
Var<S> exp(const Var<S>& a) {
  return map_unary(a, [](S x) { return std::exp(x); }, [](S, S y) { return y; });
}

template <typename S>
Var<S> log(const Var<S>& a) {
  return map_unary(a, [](S x) { return std::log(x); }, [](S x, S) { return S(1) / x; });
}

template <typename S>
Var<S> sqrt(const Var<S>& a) {
  return map_unary(a, [](S x) { return std::sqrt(x); }, [](S, S y) { return S(0.5) / y; });
}

template <typename S>
Var<S> square(const Var<S>& a) {
  return map_unary(a, [](S x) { return x * x; }, [](S x, S) { return S(2) * x; });
}

template <typename S>
Var<S> sigmoid(const Var<S>& a) {
  return map_unary(
      a,
      [](S x) {
        return x >= 0 ? S(1) / (S(1) + std::exp(-x)) : std::exp(x) / (S(1) + std::exp(x));
      },
      [](S, S y) { return y * (S(1) - y); });
}

template <typename S>
Var<S> tanh(const Var<S>& a) {
  return map_unary(a, [](S x) { return std::tanh(x); }, [](S, S y) { return S(1) - y * y; });
}

template <typename S>
Var<S> relu(const Var<S>& a) {
  return map_unary(a, [](S x) { return x > 0 ? x : S(0); }, [](S x, S) { return x > 0 ? S(1) : S(0); });
}

template <typename S>
Var<S> leaky_relu(const Var<S>& a, S slope = S(0.01)) {
  return map_unary(
      a, [slope](S x) { return x > 0 ? x : slope * x; },
      [slope](S x, S) { return x > 0 ? S(1) : slope; });
}

/// Exact (erf-based) GELU.
template <typename S>
Var<S> gelu(const Var<S>& a) {
  constexpr S inv_sqrt2 = S(0.70710678118654752440);
  constexpr S inv_sqrt_2pi = S(0.39894228040143267794);
  return map_unary(
      a, [](S x) { return S(0.5) * x * (S(1) + std::erf(x * inv_sqrt2)); },
      [](S x, S) {
        return S(0.5) * (S(1) + std::erf(x * inv_sqrt2)) + x * inv_sqrt_2pi * std::exp(S(-0.5) * x * x);
      });
}

// ---------------------------------------------------------------------------
// Reductions

template <typename S>
Var<S> sum(const Var<S>& a) {
  Mat<S> out = Mat<S>::Constant(1, 1, a.value().sum());
  return make_result<S>(std::move(out), {a}, [](Node<S>& self) {
    auto& p = *self.parents[0];
    p.accumulate(Mat<S>::Constant(p.value.rows(), p.value.cols(), self.grad(0, 0)));
  });
}

template <typename S>
Var<S> mean(const Var<S>& a) {
  return scale(sum(a), S(1) / static_cast<S>(a.value().size()));
}

/// r x c -> r x 1
template <typename S>
Var<S> row_sum(const Var<S>& a) {
  Mat<S> out = a.value().rowwise().sum();
  return make_result<S>(std::move(out), {a}, [](Node<S>& self) {
    auto& p = *self.parents[0];
    p.accumulate(self.grad.replicate(1, p.value.cols()));
  });
}

template <typename S>
Var<S> row_mean(const Var<S>& a) {
  return scale(row_sum(a), S(1) / static_cast<S>(a.cols()));
}

/// r x c -> 1 x c
template <typename S>
Var<S> col_sum(const Var<S>& a) {
  Mat<S> out = a.value().colwise().sum();
  return make_result<S>(std::move(out), {a}, [](Node<S>& self) {
    auto& p = *self.parents[0];
    p.accumulate(self.grad.replicate(p.value.rows(), 1));
  });
}

/// r x c -> r x 1; gradient flows to the first maximal entry of each row.
template <typename S>
Var<S> row_max(const Var<S>& a) {
  const Index r = a.rows();
  Mat<S> out(r, 1);
  std::vector<Index> arg(static_cast<std::size_t>(r));
  for (Index i = 0; i < r; ++i) out(i, 0) = a.value().row(i).maxCoeff(&arg[i]);
  return make_result<S>(std::move(out), {a}, [arg](Node<S>& self) {
    auto& p = *self.parents[0];
    Mat<S> g = Mat<S>::Zero(p.value.rows(), p.value.cols());
    for (Index i = 0; i < g.rows(); ++i) g(i, arg[i]) = self.grad(i, 0);
    p.accumulate(g);
  });
}

// ---------------------------------------------------------------------------
// Shape ops

template <typename S>
Var<S> concat_cols(const std::vector<Var<S>>& parts) {
  if (parts.empty()) throw Error(ErrorCode::invalid_argument, "concat of nothing");
  const Index r = parts.front().rows();
  Index c = 0;
  for (const auto& p : parts) {
    if (p.rows() != r) throw Error(ErrorCode::dimension_mismatch, "concat_cols row mismatch");
    c += p.cols();
  }
  Mat<S> out(r, c);
  Index at = 0;
  for (const auto& p : parts) {
    out.middleCols(at, p.cols()) = p.value();
    at += p.cols();
  }
  return make_result<S>(std::move(out), parts, [](Node<S>& self) {
    Index at = 0;
    for (auto& p : self.parents) {
      const Index w = p->value.cols();
      if (p->requires_grad) p->accumulate(self.grad.middleCols(at, w));
      at += w;
    }
  });
}

template <typename S>
Var<S> slice_cols(const Var<S>& a, Index start, Index count) {
  if (start < 0 || count < 0 || start + count > a.cols())
    throw Error(ErrorCode::dimension_mismatch, "slice_cols out of range");
  Mat<S> out = a.value().middleCols(start, count);
  return make_result<S>(std::move(out), {a}, [start, count](Node<S>& self) {
    auto& p = *self.parents[0];
    Mat<S> g = Mat<S>::Zero(p.value.rows(), p.value.cols());
    g.middleCols(start, count) = self.grad;
    p.accumulate(g);
  });
}

template <typename S>
std::vector<Var<S>> split_cols(const Var<S>& a, Index parts) {
  if (parts <= 0 || a.cols() % parts != 0)
    throw Error(ErrorCode::dimension_mismatch, "split_cols needs an even split");
  const Index w = a.cols() / parts;
  std::vector<Var<S>> out;
  for (Index i = 0; i < parts; ++i) out.push_back(slice_cols(a, i * w, w));
  return out;
}

// ---------------------------------------------------------------------------
// Gather / segment ops. Segments are given as one id per row.

using IndexList = std::vector<int>;

/// out.row(i) = a.row(idx[i])
template <typename S>
Var<S> gather_rows(const Var<S>& a, std::shared_ptr<const IndexList> idx) {
  const Index n = static_cast<Index>(idx->size());
  Mat<S> out(n, a.cols());
  for (Index i = 0; i < n; ++i) {
    const int j = (*idx)[i];
    if (j < 0 || j >= a.rows()) throw Error(ErrorCode::invalid_argument, "gather index out of range");
    out.row(i) = a.value().row(j);
  }
  return make_result<S>(std::move(out), {a}, [idx](Node<S>& self) {
    auto& p = *self.parents[0];
    Mat<S> g = Mat<S>::Zero(p.value.rows(), p.value.cols());
    for (Index i = 0; i < static_cast<Index>(idx->size()); ++i) g.row((*idx)[i]) += self.grad.row(i);
    p.accumulate(g);
  });
}

template <typename S>
Var<S> gather_rows(const Var<S>& a, const IndexList& idx) {
  return gather_rows(a, std::make_shared<const IndexList>(idx));
}

/// out.row(s) = sum of a.row(i) with seg[i] == s
template <typename S>
Var<S> segment_sum(const Var<S>& a, std::shared_ptr<const IndexList> seg, Index num_segments) {
  if (static_cast<Index>(seg->size()) != a.rows())
    throw Error(ErrorCode::dimension_mismatch, "segment ids must match rows");
  Mat<S> out = Mat<S>::Zero(num_segments, a.cols());
  for (Index i = 0; i < a.rows(); ++i) {
    const int s = (*seg)[i];
    if (s < 0 || s >= num_segments) throw Error(ErrorCode::invalid_argument, "segment id out of range");
    out.row(s) += a.value().row(i);
  }
  return make_result<S>(std::move(out), {a}, [seg](Node<S>& self) {
    auto& p = *self.parents[0];
    Mat<S> g(p.value.rows(), p.value.cols());
    for (Index i = 0; i < g.rows(); ++i) g.row(i) = self.grad.row((*seg)[i]);
    p.accumulate(g);
  });
}

template <typename S>
Var<S> segment_mean(const Var<S>& a, std::shared_ptr<const IndexList> seg, Index num_segments) {
  Mat<S> inv_count = Mat<S>::Zero(num_segments, 1);
  for (int s : *seg) inv_count(s, 0) += S(1);
  for (Index s = 0; s < num_segments; ++s)
    inv_count(s, 0) = inv_count(s, 0) > 0 ? S(1) / inv_count(s, 0) : S(0);
  return mul(segment_sum(a, seg, num_segments), constant<S>(inv_count));
}

/// Per-segment, per-column maximum. Empty segments yield zero rows.
template <typename S>
Var<S> segment_max(const Var<S>& a, std::shared_ptr<const IndexList> seg, Index num_segments) {
  if (static_cast<Index>(seg->size()) != a.rows())
    throw Error(ErrorCode::dimension_mismatch, "segment ids must match rows");
  const Index c = a.cols();
  Mat<S> out = Mat<S>::Zero(num_segments, c);
  Eigen::Matrix<Index, Eigen::Dynamic, Eigen::Dynamic> arg =
      Eigen::Matrix<Index, Eigen::Dynamic, Eigen::Dynamic>::Constant(num_segments, c, -1);
  for (Index i = 0; i < a.rows(); ++i) {
    const int s = (*seg)[i];
    for (Index j = 0; j < c; ++j)
      if (arg(s, j) < 0 || a.value()(i, j) > out(s, j)) {
        out(s, j) = a.value()(i, j);
        arg(s, j) = i;
      }
  }
  return make_result<S>(std::move(out), {a}, [arg](Node<S>& self) {
    auto& p = *self.parents[0];
    Mat<S> g = Mat<S>::Zero(p.value.rows(), p.value.cols());
    for (Index s = 0; s < arg.rows(); ++s)
      for (Index j = 0; j < arg.cols(); ++j)
        if (arg(s, j) >= 0) g(arg(s, j), j) += self.grad(s, j);
    p.accumulate(g);
  });
}

/// Column-wise softmax of `scores` within each segment.
template <typename S>
Var<S> segment_softmax(const Var<S>& scores, std::shared_ptr<const IndexList> seg,
                       Index num_segments) {
  if (static_cast<Index>(seg->size()) != scores.rows())
    throw Error(ErrorCode::dimension_mismatch, "segment ids must match rows");
  const Index n = scores.rows(), c = scores.cols();
  const auto& x = scores.value();
  Mat<S> mx = Mat<S>::Constant(num_segments, c, -std::numeric_limits<S>::infinity());
  for (Index i = 0; i < n; ++i) mx.row((*seg)[i]) = mx.row((*seg)[i]).cwiseMax(x.row(i));
  Mat<S> out(n, c);
  Mat<S> denom = Mat<S>::Zero(num_segments, c);
  for (Index i = 0; i < n; ++i) {
    out.row(i) = (x.row(i) - mx.row((*seg)[i])).array().exp().matrix();
    denom.row((*seg)[i]) += out.row(i);
  }
  for (Index i = 0; i < n; ++i) out.row(i) = out.row(i).cwiseQuotient(denom.row((*seg)[i]));
  return make_result<S>(out, {scores}, [seg, out, num_segments](Node<S>& self) {
    // dx_i = y_i * (g_i - sum_{j in seg(i)} g_j y_j)
    Mat<S> dot = Mat<S>::Zero(num_segments, out.cols());
    for (Index i = 0; i < out.rows(); ++i) dot.row((*seg)[i]) += self.grad.row(i).cwiseProduct(out.row(i));
    Mat<S> g(out.rows(), out.cols());
    for (Index i = 0; i < out.rows(); ++i)
      g.row(i) = out.row(i).cwiseProduct(self.grad.row(i) - dot.row((*seg)[i]));
    self.parents[0]->accumulate(g);
  });
}

// ---------------------------------------------------------------------------
// Multi-head helpers. Column block h of an (r x H*d) matrix belongs to head h.

/// out(i, h) = sum_k z(i, h*d + k) * a(0, h*d + k)
template <typename S>
Var<S> head_dot(const Var<S>& z, const Var<S>& a, Index heads) {
  if (a.rows() != 1 || a.cols() != z.cols() || z.cols() % heads != 0)
    throw Error(ErrorCode::dimension_mismatch, "head_dot");
  const Index d = z.cols() / heads;
  Mat<S> out(z.rows(), heads);
  for (Index h = 0; h < heads; ++h)
    out.col(h) = z.value().middleCols(h * d, d) * a.value().middleCols(h * d, d).transpose();
  return make_result<S>(std::move(out), {z, a}, [heads, d](Node<S>& self) {
    auto& Z = *self.parents[0];
    auto& A = *self.parents[1];
    if (Z.requires_grad) {
      Mat<S> g(Z.value.rows(), Z.value.cols());
      for (Index h = 0; h < heads; ++h)
        g.middleCols(h * d, d) = self.grad.col(h) * A.value.middleCols(h * d, d);
      Z.accumulate(g);
    }
    if (A.requires_grad) {
      Mat<S> g(1, A.value.cols());
      for (Index h = 0; h < heads; ++h)
        g.middleCols(h * d, d) = self.grad.col(h).transpose() * Z.value.middleCols(h * d, d);
      A.accumulate(g);
    }
  });
}

/// out(i, h) = sum_k q(i, h*d + k) * k(i, h*d + k)
template <typename S>
Var<S> head_rowdot(const Var<S>& q, const Var<S>& k, Index heads) {
  if (q.rows() != k.rows() || q.cols() != k.cols() || q.cols() % heads != 0)
    throw Error(ErrorCode::dimension_mismatch, "head_rowdot");
  const Index d = q.cols() / heads;
  Mat<S> out(q.rows(), heads);
  for (Index h = 0; h < heads; ++h)
    out.col(h) = q.value().middleCols(h * d, d).cwiseProduct(k.value().middleCols(h * d, d)).rowwise().sum();
  return make_result<S>(std::move(out), {q, k}, [heads, d](Node<S>& self) {
    auto& Q = *self.parents[0];
    auto& K = *self.parents[1];
    for (int side = 0; side < 2; ++side) {
      auto& me = side == 0 ? Q : K;
      auto& other = side == 0 ? K : Q;
      if (!me.requires_grad) continue;
      Mat<S> g(me.value.rows(), me.value.cols());
      for (Index h = 0; h < heads; ++h)
        g.middleCols(h * d, d) = other.value.middleCols(h * d, d).array().colwise() * self.grad.col(h).array();
      me.accumulate(g);
    }
  });
}

/// out(i, h*d + k) = m(i, h*d + k) * alpha(i, h)
template <typename S>
Var<S> head_scale(const Var<S>& m, const Var<S>& alpha, Index heads) {
  if (m.rows() != alpha.rows() || alpha.cols() != heads || m.cols() % heads != 0)
    throw Error(ErrorCode::dimension_mismatch, "head_scale");
  const Index d = m.cols() / heads;
  Mat<S> out(m.rows(), m.cols());
  for (Index h = 0; h < heads; ++h)
    out.middleCols(h * d, d) = m.value().middleCols(h * d, d).array().colwise() * alpha.value().col(h).array();
  return make_result<S>(std::move(out), {m, alpha}, [heads, d](Node<S>& self) {
    auto& M = *self.parents[0];
    auto& A = *self.parents[1];
    if (M.requires_grad) {
      Mat<S> g(M.value.rows(), M.value.cols());
      for (Index h = 0; h < heads; ++h)
        g.middleCols(h * d, d) = self.grad.middleCols(h * d, d).array().colwise() * A.value.col(h).array();
      M.accumulate(g);
    }
    if (A.requires_grad) {
      Mat<S> g(A.value.rows(), heads);
      for (Index h = 0; h < heads; ++h)
        g.col(h) = self.grad.middleCols(h * d, d).cwiseProduct(M.value.middleCols(h * d, d)).rowwise().sum();
      A.accumulate(g);
    }
  });
}

// ---------------------------------------------------------------------------
// Regularization and losses

/// Inverted dropout: kept entries are scaled by 1/(1-p). Identity when not training.
template <typename S>
Var<S> dropout(const Var<S>& a, double p, bool training, std::mt19937_64& rng) {
  if (!training || p <= 0.0) return a;
  if (p >= 1.0) throw Error(ErrorCode::invalid_argument, "dropout probability must be < 1");
  std::bernoulli_distribution keep(1.0 - p);
  const S s = S(1) / static_cast<S>(1.0 - p);
  Mat<S> mask(a.rows(), a.cols());
  for (Index i = 0; i < mask.size(); ++i) mask.data()[i] = keep(rng) ? s : S(0);
  return mul(a, constant<S>(mask));
}

/// Row-wise log-softmax.
template <typename S>
Mat<S> log_softmax_rows(const Mat<S>& logits) {
  Mat<S> out(logits.rows(), logits.cols());
  for (Index i = 0; i < logits.rows(); ++i) {
    const S m = logits.row(i).maxCoeff();
    const S lse = m + std::log((logits.row(i).array() - m).exp().sum());
    out.row(i) = logits.row(i).array() - lse;
  }
  return out;
}

template <typename S>
Mat<S> softmax_rows(const Mat<S>& logits) {
  return log_softmax_rows(logits).array().exp().matrix();
}

/// Weighted cross-entropy, normalized by the total weight of the batch:
/// sum_i w[y_i] * -log p(y_i) / sum_i w[y_i]. Empty weights mean uniform.
template <typename S>
Var<S> cross_entropy(const Var<S>& logits, const std::vector<int>& labels,
                     const std::vector<double>& class_weights = {}) {
  const Index n = logits.rows(), c = logits.cols();
  if (static_cast<Index>(labels.size()) != n)
    throw Error(ErrorCode::dimension_mismatch, "one label per logit row");
  if (!class_weights.empty() && static_cast<Index>(class_weights.size()) != c)
    throw Error(ErrorCode::dimension_mismatch, "one weight per class");
  Mat<S> logp = log_softmax_rows(logits.value());
  std::vector<S> w(static_cast<std::size_t>(n));
  S total_w = 0, loss = 0;
  for (Index i = 0; i < n; ++i) {
    const int y = labels[i];
    if (y < 0 || y >= c) throw Error(ErrorCode::invalid_argument, "label out of range");
    w[i] = class_weights.empty() ? S(1) : static_cast<S>(class_weights[y]);
    total_w += w[i];
    loss -= w[i] * logp(i, y);
  }
  if (total_w <= 0) throw Error(ErrorCode::invalid_argument, "total class weight is zero");
  loss /= total_w;
  return make_result<S>(Mat<S>::Constant(1, 1, loss), {logits},
                        [logp, labels, w, total_w](Node<S>& self) {
                          Mat<S> g = logp.array().exp().matrix();
                          for (Index i = 0; i < g.rows(); ++i) {
                            g(i, labels[i]) -= S(1);
                            g.row(i) *= w[i] / total_w;
                          }
                          self.parents[0]->accumulate(g * self.grad(0, 0));
                        });
}

}  // namespace plmgnn::nn
