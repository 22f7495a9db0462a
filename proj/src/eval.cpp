#include "plmgnn/eval.hpp"

#include <boost/math/distributions/fisher_f.hpp>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>

#include "plmgnn/error.hpp"

namespace plmgnn {
namespace {

double safe_div(double a, double b) { return b > 0 ? a / b : 0.0; }

Prf prf_from_counts(double tp, double fp, double fn) {
  Prf r;
  r.precision = safe_div(tp, tp + fp);
  r.recall = safe_div(tp, tp + fn);
  r.f1 = safe_div(2 * r.precision * r.recall, r.precision + r.recall);
  return r;
}

void check_lengths(std::size_t a, std::size_t b) {
  if (a != b) throw Error(ErrorCode::dimension_mismatch, "label and prediction counts differ");
}

// Sum that does not depend on the order terms were produced in.
double order_free_sum(std::vector<double> terms) {
  std::sort(terms.begin(), terms.end());
  double s = 0;
  for (double t : terms) s += t;
  return s;
}

}  // namespace

Prf macro_prf(std::span<const int> y_true, std::span<const int> y_pred, int num_classes) {
  check_lengths(y_true.size(), y_pred.size());
  if (num_classes < 1) throw Error(ErrorCode::invalid_argument, "num_classes must be >= 1");
  std::vector<double> tp(num_classes), fp(num_classes), fn(num_classes);
  for (std::size_t i = 0; i < y_true.size(); ++i) {
    const int t = y_true[i], p = y_pred[i];
    if (t < 0 || t >= num_classes || p < 0 || p >= num_classes)
      throw Error(ErrorCode::invalid_argument, "label outside 0..K-1");
    if (t == p) {
      tp[t] += 1;
    } else {
      fp[p] += 1;
      fn[t] += 1;
    }
  }
  Prf sum;
  for (int c = 0; c < num_classes; ++c) {
    auto r = prf_from_counts(tp[c], fp[c], fn[c]);
    sum.precision += r.precision;
    sum.recall += r.recall;
    sum.f1 += r.f1;
  }
  return {sum.precision / num_classes, sum.recall / num_classes, sum.f1 / num_classes};
}

Prf positive_class_prf(std::span<const int> y_true, std::span<const int> y_pred) {
  check_lengths(y_true.size(), y_pred.size());
  double tp = 0, fp = 0, fn = 0;
  for (std::size_t i = 0; i < y_true.size(); ++i) {
    if (y_pred[i] == 1 && y_true[i] == 1) tp += 1;
    if (y_pred[i] == 1 && y_true[i] != 1) fp += 1;
    if (y_pred[i] != 1 && y_true[i] == 1) fn += 1;
  }
  return prf_from_counts(tp, fp, fn);
}

double accuracy(std::span<const int> y_true, std::span<const int> y_pred) {
  check_lengths(y_true.size(), y_pred.size());
  if (y_true.empty()) return 0.0;
  std::size_t hit = 0;
  for (std::size_t i = 0; i < y_true.size(); ++i) hit += y_true[i] == y_pred[i];
  return static_cast<double>(hit) / static_cast<double>(y_true.size());
}

double auprc(std::span<const int> y_true, std::span<const double> scores) {
  check_lengths(y_true.size(), scores.size());
  const auto positives = std::count(y_true.begin(), y_true.end(), 1);
  if (positives == 0) throw Error(ErrorCode::no_positives, "AUPRC needs at least one positive");
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](auto a, auto b) { return scores[a] > scores[b]; });
  double tp = 0, fp = 0, prev_recall = 0, ap = 0;
  for (std::size_t i = 0; i < order.size();) {
    const double s = scores[order[i]];
    for (; i < order.size() && scores[order[i]] == s; ++i) (y_true[order[i]] == 1 ? tp : fp) += 1;
    const double recall = tp / static_cast<double>(positives);
    ap += (recall - prev_recall) * (tp / (tp + fp));
    prev_recall = recall;
  }
  return ap;
}

CalibratedThreshold calibrate_threshold(std::span<const double> val_scores, std::span<const int> val_labels) {
  check_lengths(val_scores.size(), val_labels.size());
  if (std::find(val_labels.begin(), val_labels.end(), 1) == val_labels.end())
    throw Error(ErrorCode::single_class, "validation set has no positives; F1 is zero at every threshold");
  std::set<double> grid(val_scores.begin(), val_scores.end());
  grid.insert(0.0);
  grid.insert(1.0);

  // Sweep thresholds in ascending order; predictions at tau are score >= tau.
  std::vector<std::size_t> order(val_scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](auto a, auto b) { return val_scores[a] < val_scores[b]; });
  const double total_pos = static_cast<double>(std::count(val_labels.begin(), val_labels.end(), 1));
  double tp = total_pos;
  double fp = static_cast<double>(val_labels.size()) - total_pos;
  std::size_t cursor = 0;

  CalibratedThreshold best{0.0, -1.0};
  for (double tau : grid) {
    while (cursor < order.size() && val_scores[order[cursor]] < tau) {
      (val_labels[order[cursor]] == 1 ? tp : fp) -= 1;
      ++cursor;
    }
    const double fn = total_pos - tp;
    const double f1 = safe_div(2 * tp, 2 * tp + fp + fn);
    if (f1 > best.val_f1) best = {tau, f1};
  }
  return best;
}

std::vector<int> apply_threshold(std::span<const double> scores, double tau) {
  std::vector<int> out(scores.size());
  for (std::size_t i = 0; i < scores.size(); ++i) out[i] = scores[i] >= tau ? 1 : 0;
  return out;
}

MeanStd summarize(std::span<const double> values) {
  MeanStd out;
  if (values.empty()) return out;
  const double n = static_cast<double>(values.size());
  out.mean = std::accumulate(values.begin(), values.end(), 0.0) / n;
  if (values.size() >= 2) {
    double ss = 0;
    for (double v : values) ss += (v - out.mean) * (v - out.mean);
    out.std = std::sqrt(ss / (n - 1));
  }
  return out;
}

double f_survival(double f, double df1, double df2) {
  if (!(f >= 0) || !std::isfinite(f)) return f > 0 ? 0.0 : 1.0;
  boost::math::fisher_f_distribution<double> dist(df1, df2);
  return boost::math::cdf(boost::math::complement(dist, f));
}

AnovaResult anova_two_way(const AnovaGrid& values, const std::string& name_a, const std::string& name_b) {
  const std::size_t a = values.size();
  if (a < 2) throw Error(ErrorCode::unbalanced_design, "factor A needs at least 2 levels");
  const std::size_t b = values[0].size();
  if (b < 2) throw Error(ErrorCode::unbalanced_design, "factor B needs at least 2 levels");
  const std::size_t n = values[0][0].size();
  for (const auto& row : values) {
    if (row.size() != b) throw Error(ErrorCode::unbalanced_design, "rows have different level counts");
    for (const auto& cell : row)
      if (cell.size() != n) throw Error(ErrorCode::unbalanced_design, "cells have different replicate counts");
  }
  if (n < 2) throw Error(ErrorCode::unbalanced_design, "each cell needs at least 2 replicates");

  std::vector<std::vector<double>> cell(a, std::vector<double>(b));
  std::vector<double> all;
  for (std::size_t i = 0; i < a; ++i)
    for (std::size_t j = 0; j < b; ++j) {
      cell[i][j] = order_free_sum(values[i][j]) / static_cast<double>(n);
      all.insert(all.end(), values[i][j].begin(), values[i][j].end());
    }
  const double grand = order_free_sum(all) / static_cast<double>(all.size());

  std::vector<double> row_mean(a), col_mean(b);
  for (std::size_t i = 0; i < a; ++i) {
    std::vector<double> t;
    for (std::size_t j = 0; j < b; ++j) t.insert(t.end(), values[i][j].begin(), values[i][j].end());
    row_mean[i] = order_free_sum(t) / static_cast<double>(t.size());
  }
  for (std::size_t j = 0; j < b; ++j) {
    std::vector<double> t;
    for (std::size_t i = 0; i < a; ++i) t.insert(t.end(), values[i][j].begin(), values[i][j].end());
    col_mean[j] = order_free_sum(t) / static_cast<double>(t.size());
  }

  std::vector<double> ta, tb, tab, tres, ttot;
  for (std::size_t i = 0; i < a; ++i) ta.push_back((row_mean[i] - grand) * (row_mean[i] - grand));
  for (std::size_t j = 0; j < b; ++j) tb.push_back((col_mean[j] - grand) * (col_mean[j] - grand));
  for (std::size_t i = 0; i < a; ++i)
    for (std::size_t j = 0; j < b; ++j) {
      const double inter = cell[i][j] - row_mean[i] - col_mean[j] + grand;
      tab.push_back(inter * inter);
      for (double y : values[i][j]) {
        tres.push_back((y - cell[i][j]) * (y - cell[i][j]));
        ttot.push_back((y - grand) * (y - grand));
      }
    }

  AnovaResult r;
  r.a.name = name_a;
  r.b.name = name_b;
  r.ab.name = name_a + "x" + name_b;
  r.a.ss = static_cast<double>(b * n) * order_free_sum(ta);
  r.b.ss = static_cast<double>(a * n) * order_free_sum(tb);
  r.ab.ss = static_cast<double>(n) * order_free_sum(tab);
  r.ss_residual = order_free_sum(tres);
  r.ss_total = order_free_sum(ttot);
  r.a.df = static_cast<double>(a - 1);
  r.b.df = static_cast<double>(b - 1);
  r.ab.df = r.a.df * r.b.df;
  r.df_residual = static_cast<double>(a * b * (n - 1));
  r.df_total = static_cast<double>(a * b * n - 1);
  r.ms_residual = r.ss_residual / r.df_residual;

  const double scale = std::max(1.0, r.ss_total);
  if (r.ss_residual <= 1e-14 * scale)
    throw Error(ErrorCode::zero_residual_variance, "residual variance is zero; F is undefined");

  for (AnovaEffect* e : {&r.a, &r.b, &r.ab}) {
    e->ms = e->ss / e->df;
    e->f = e->ms / r.ms_residual;
    e->p = f_survival(e->f, e->df, r.df_residual);
    e->partial_eta2 = e->ss / (e->ss + r.ss_residual);
  }
  return r;
}

}  // namespace plmgnn
