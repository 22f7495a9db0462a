#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

namespace plmgnn {

struct Prf {
  double precision = 0;
  double recall = 0;
  double f1 = 0;
};

/// Per-class precision/recall/F1 averaged without weights over classes
/// 0..K-1. Zero denominators count as 0.
Prf macro_prf(std::span<const int> y_true, std::span<const int> y_pred, int num_classes);

/// Precision/recall/F1 of class 1 in a binary task.
Prf positive_class_prf(std::span<const int> y_true, std::span<const int> y_pred);

double accuracy(std::span<const int> y_true, std::span<const int> y_pred);

/// Average precision: sum over distinct score thresholds (descending) of
/// (R_i - R_{i-1}) * P_i, tied scores forming a single step.
double auprc(std::span<const int> y_true, std::span<const double> scores);

/// Decision threshold chosen on validation data only:
/// argmax over {unique scores} U {0, 1} of positive-class F1(1[score >= tau]),
/// smallest tau on ties. Test splits reuse the returned value unchanged.
struct CalibratedThreshold {
  double tau = 0.5;
  double val_f1 = 0;
};
CalibratedThreshold calibrate_threshold(std::span<const double> val_scores, std::span<const int> val_labels);

std::vector<int> apply_threshold(std::span<const double> scores, double tau);

struct MeanStd {
  double mean = 0;
  std::optional<double> std;  // sample std; absent for fewer than 2 values
};
MeanStd summarize(std::span<const double> values);

// ---------------------------------------------------------------------------
// Two-way ANOVA with interaction for a balanced design.

struct AnovaEffect {
  std::string name;
  double ss = 0;
  double df = 0;
  double ms = 0;
  double f = 0;
  double p = 0;
  double partial_eta2 = 0;  // ss / (ss + ss_residual)
};

struct AnovaResult {
  AnovaEffect a, b, ab;
  double ss_residual = 0;
  double df_residual = 0;
  double ms_residual = 0;
  double ss_total = 0;
  double df_total = 0;
};

/// values[i][j] holds the replicates of cell (level i of A, level j of B).
using AnovaGrid = std::vector<std::vector<std::vector<double>>>;

AnovaResult anova_two_way(const AnovaGrid& values, const std::string& name_a = "A",
                          const std::string& name_b = "B");

/// Upper tail P(F > f) of the F(df1, df2) distribution.
double f_survival(double f, double df1, double df2);

}  // namespace plmgnn
