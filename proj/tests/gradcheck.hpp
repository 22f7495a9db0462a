#pragma once

#include <cmath>
#include <functional>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "plmgnn/nn/tensor.hpp"

namespace plmgnn::testing {

using Leaves = std::vector<std::pair<std::string, nn::Var<double>>>;

struct GradCheckResult {
  double max_rel_error = 0;
  std::string worst;
};

/// Compares backward() against central differences, one tensor at a time.
/// Error per tensor is ||analytic - numeric||_2 / max(||analytic||_2, ||numeric||_2),
/// taken as 0 when both norms are below 1e-12.
inline GradCheckResult grad_check(Leaves leaves, const std::function<nn::Var<double>()>& loss_fn,
                                  double step = 1e-5) {
  for (auto& [_, v] : leaves) v.zero_grad();
  nn::backward(loss_fn());
  GradCheckResult out;
  for (auto& [name, v] : leaves) {
    const nn::Mat<double> analytic = v.grad();
    nn::Mat<double> numeric(v.rows(), v.cols());
    {
      nn::NoGradGuard guard;
      for (Eigen::Index i = 0; i < v.value().size(); ++i) {
        double& x = v.mutable_value().data()[i];
        const double orig = x;
        x = orig + step;
        const double up = loss_fn().item();
        x = orig - step;
        const double down = loss_fn().item();
        x = orig;
        numeric.data()[i] = (up - down) / (2 * step);
      }
    }
    const double an = analytic.norm(), nu = numeric.norm();
    const double err = (an < 1e-12 && nu < 1e-12) ? 0.0 : (analytic - numeric).norm() / std::max(an, nu);
    if (err >= out.max_rel_error) {
      out.max_rel_error = err;
      out.worst = name;
    }
  }
  return out;
}

inline nn::Mat<double> random_mat(Eigen::Index r, Eigen::Index c, std::mt19937_64& rng, double lo = -1,
                                  double hi = 1) {
  std::uniform_real_distribution<double> u(lo, hi);
  nn::Mat<double> m(r, c);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = u(rng);
  return m;
}

/// Entries bounded away from zero, for ops with a kink there.
inline nn::Mat<double> off_zero_mat(Eigen::Index r, Eigen::Index c, std::mt19937_64& rng) {
  nn::Mat<double> m = random_mat(r, c, rng, 0.05, 1.0);
  std::bernoulli_distribution neg(0.5);
  for (Eigen::Index i = 0; i < m.size(); ++i)
    if (neg(rng)) m.data()[i] = -m.data()[i];
  return m;
}

/// Distinct entries with gaps far larger than the step, for max-type ops.
inline nn::Mat<double> spread_mat(Eigen::Index r, Eigen::Index c, std::mt19937_64& rng) {
  std::vector<double> vals(static_cast<std::size_t>(r * c));
  for (std::size_t i = 0; i < vals.size(); ++i) vals[i] = 0.1 * static_cast<double>(i) - 0.05 * vals.size();
  std::shuffle(vals.begin(), vals.end(), rng);
  nn::Mat<double> m(r, c);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = vals[static_cast<std::size_t>(i)];
  return m;
}

/// Scalar probe sum(out .* R) with a fixed random R, so every output entry matters.
inline nn::Var<double> probe(const nn::Var<double>& out, std::uint64_t seed = 99) {
  std::mt19937_64 rng(seed);
  return nn::sum(nn::mul(out, nn::constant<double>(random_mat(out.rows(), out.cols(), rng))));
}

struct PrimitiveCase {
  std::string name;
  std::function<GradCheckResult(std::mt19937_64&)> run;
};

inline std::vector<PrimitiveCase> primitive_cases() {
  using namespace nn;
  using V = Var<double>;
  auto P = [](const Mat<double>& m) { return parameter<double>(m); };
  std::vector<PrimitiveCase> cases;
  auto unary = [&](std::string name, std::function<V(const V&)> op, bool off_zero, bool positive = false) {
    cases.push_back({name, [=](std::mt19937_64& rng) {
                       Mat<double> m = positive ? random_mat(4, 3, rng, 0.2, 2.0)
                                                : off_zero ? off_zero_mat(4, 3, rng) : random_mat(4, 3, rng);
                       V a = P(m);
                       return grad_check({{"a", a}}, [=] { return probe(op(a)); });
                     }});
  };
  unary("exp", [](const V& a) { return exp(a); }, false);
  unary("log", [](const V& a) { return log(a); }, false, true);
  unary("sqrt", [](const V& a) { return sqrt(a); }, false, true);
  unary("square", [](const V& a) { return square(a); }, false);
  unary("sigmoid", [](const V& a) { return sigmoid(a); }, false);
  unary("tanh", [](const V& a) { return tanh(a); }, false);
  unary("relu", [](const V& a) { return relu(a); }, true);
  unary("leaky_relu", [](const V& a) { return leaky_relu(a, 0.2); }, true);
  unary("gelu", [](const V& a) { return gelu(a); }, false);
  unary("scale", [](const V& a) { return scale(a, -2.5); }, false);
  unary("sum", [](const V& a) { return sum(a); }, false);
  unary("mean", [](const V& a) { return mean(a); }, false);
  unary("row_sum", [](const V& a) { return row_sum(a); }, false);
  unary("row_mean", [](const V& a) { return row_mean(a); }, false);
  unary("col_sum", [](const V& a) { return col_sum(a); }, false);
  unary("slice_cols", [](const V& a) { return slice_cols(a, 1, 2); }, false);
  unary("split_cols", [](const V& a) { auto p = split_cols(a, 3); return p[0] * p[1] + p[2]; }, false);

  cases.push_back({"row_max", [=](std::mt19937_64& rng) {
                     V a = P(spread_mat(4, 5, rng));
                     return grad_check({{"a", a}}, [=] { return probe(row_max(a)); });
                   }});
  cases.push_back({"matmul", [=](std::mt19937_64& rng) {
                     V a = P(random_mat(3, 4, rng)), b = P(random_mat(4, 2, rng));
                     return grad_check({{"a", a}, {"b", b}}, [=] { return probe(matmul(a, b)); });
                   }});
  cases.push_back({"sparse_matmul", [=](std::mt19937_64& rng) {
                     Eigen::SparseMatrix<double> m = random_mat(4, 3, rng).sparseView(0.3, 1.0);
                     V x = P(random_mat(3, 2, rng));
                     return grad_check({{"x", x}}, [=] { return probe(sparse_matmul(m, x)); });
                   }});
  for (auto [name, op] : std::vector<std::pair<std::string, std::function<V(const V&, const V&)>>>{
           {"add", [](const V& a, const V& b) { return a + b; }},
           {"sub", [](const V& a, const V& b) { return a - b; }},
           {"mul", [](const V& a, const V& b) { return a * b; }},
           {"div", [](const V& a, const V& b) { return a / b; }}}) {
    cases.push_back({name + "_same_shape", [=](std::mt19937_64& rng) {
                       V a = P(random_mat(3, 4, rng)), b = P(random_mat(3, 4, rng, 0.5, 1.5));
                       return grad_check({{"a", a}, {"b", b}}, [=] { return probe(op(a, b)); });
                     }});
    cases.push_back({name + "_broadcast_row", [=](std::mt19937_64& rng) {
                       V a = P(random_mat(3, 4, rng)), b = P(random_mat(1, 4, rng, 0.5, 1.5));
                       return grad_check({{"a", a}, {"b", b}}, [=] { return probe(op(a, b)); });
                     }});
    cases.push_back({name + "_broadcast_col", [=](std::mt19937_64& rng) {
                       V a = P(random_mat(1, 4, rng, 0.5, 1.5)), b = P(random_mat(3, 1, rng, 0.5, 1.5));
                       return grad_check({{"a", a}, {"b", b}}, [=] { return probe(op(a, b)); });
                     }});
  }
  cases.push_back({"concat_cols", [=](std::mt19937_64& rng) {
                     V a = P(random_mat(3, 2, rng)), b = P(random_mat(3, 1, rng)), c = P(random_mat(3, 3, rng));
                     return grad_check({{"a", a}, {"b", b}, {"c", c}},
                                       [=] { return probe(concat_cols<double>({a, b, c})); });
                   }});
  auto seg = std::make_shared<const IndexList>(IndexList{0, 2, 0, 1, 2, 2, 0});
  cases.push_back({"gather_rows", [=](std::mt19937_64& rng) {
                     V a = P(random_mat(3, 2, rng));
                     return grad_check({{"a", a}}, [=] { return probe(gather_rows(a, seg)); });
                   }});
  cases.push_back({"segment_sum", [=](std::mt19937_64& rng) {
                     V a = P(random_mat(7, 3, rng));
                     return grad_check({{"a", a}}, [=] { return probe(segment_sum(a, seg, 4)); });
                   }});
  cases.push_back({"segment_mean", [=](std::mt19937_64& rng) {
                     V a = P(random_mat(7, 3, rng));
                     return grad_check({{"a", a}}, [=] { return probe(segment_mean(a, seg, 3)); });
                   }});
  cases.push_back({"segment_max", [=](std::mt19937_64& rng) {
                     V a = P(spread_mat(7, 3, rng));
                     return grad_check({{"a", a}}, [=] { return probe(segment_max(a, seg, 3)); });
                   }});
  cases.push_back({"segment_softmax", [=](std::mt19937_64& rng) {
                     V a = P(random_mat(7, 2, rng, -2, 2));
                     return grad_check({{"a", a}}, [=] { return probe(segment_softmax(a, seg, 3)); });
                   }});
  cases.push_back({"head_dot", [=](std::mt19937_64& rng) {
                     V z = P(random_mat(4, 6, rng)), a = P(random_mat(1, 6, rng));
                     return grad_check({{"z", z}, {"a", a}}, [=] { return probe(head_dot(z, a, 3)); });
                   }});
  cases.push_back({"head_rowdot", [=](std::mt19937_64& rng) {
                     V q = P(random_mat(4, 6, rng)), k = P(random_mat(4, 6, rng));
                     return grad_check({{"q", q}, {"k", k}}, [=] { return probe(head_rowdot(q, k, 2)); });
                   }});
  cases.push_back({"head_scale", [=](std::mt19937_64& rng) {
                     V m = P(random_mat(4, 6, rng)), al = P(random_mat(4, 3, rng));
                     return grad_check({{"m", m}, {"alpha", al}}, [=] { return probe(head_scale(m, al, 3)); });
                   }});
  cases.push_back({"dropout", [=](std::mt19937_64& rng) {
                     V a = P(random_mat(5, 4, rng));
                     return grad_check({{"a", a}}, [=] {
                       std::mt19937_64 mask_rng(5);
                       return probe(dropout(a, 0.3, true, mask_rng));
                     });
                   }});
  cases.push_back({"cross_entropy", [=](std::mt19937_64& rng) {
                     V logits = P(random_mat(5, 3, rng, -2, 2));
                     const std::vector<int> y{0, 2, 1, 1, 0};
                     return grad_check({{"logits", logits}}, [=] { return cross_entropy(logits, y); });
                   }});
  cases.push_back({"cross_entropy_weighted", [=](std::mt19937_64& rng) {
                     V logits = P(random_mat(5, 2, rng, -2, 2));
                     const std::vector<int> y{0, 1, 1, 1, 0};
                     return grad_check({{"logits", logits}},
                                       [=] { return cross_entropy(logits, y, {2.5, 0.625}); });
                   }});
  return cases;
}

}  // namespace plmgnn::testing
