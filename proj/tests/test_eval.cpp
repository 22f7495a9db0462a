#include <doctest.h>

#include <random>

#include "oracles.hpp"
#include "plmgnn/error.hpp"
#include "plmgnn/eval.hpp"

using namespace plmgnn;

namespace {

ErrorCode code_of(auto&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("expected an error");
  return ErrorCode::io;
}

}  // namespace

TEST_CASE("macro precision, recall and F1") {
  std::vector<int> y{0, 1, 2, 1};
  auto perfect = macro_prf(y, y, 3);
  CHECK(perfect.f1 == 1.0);
  CHECK(perfect.precision == 1.0);

  std::vector<int> t{1, 0}, p{1, 1};
  CHECK(macro_prf(t, p, 2).f1 == doctest::Approx(1.0 / 3.0).epsilon(1e-15));

  std::vector<int> wrong{0, 1};
  auto w = macro_prf(t, wrong, 2);
  CHECK(w.precision == 0.0);
  CHECK(w.recall == 0.0);
  CHECK(w.f1 == 0.0);

  // relabeling classes consistently leaves the macro scores unchanged
  std::vector<int> yt{0, 0, 1, 2, 2, 1, 0}, yp{0, 1, 1, 2, 0, 1, 2};
  auto relabel = [](std::vector<int> v) {
    for (auto& x : v) x = (x + 1) % 3;
    return v;
  };
  auto a = macro_prf(yt, yp, 3), b = macro_prf(relabel(yt), relabel(yp), 3);
  CHECK(a.f1 == doctest::Approx(b.f1).epsilon(1e-15));
  CHECK(accuracy(yt, yp) == doctest::Approx(4.0 / 7.0));
}

TEST_CASE("positive-class scores") {
  std::vector<int> y{1, 1, 0, 0}, p{1, 0, 1, 0};
  auto r = positive_class_prf(y, p);
  CHECK(r.precision == 0.5);
  CHECK(r.recall == 0.5);
  CHECK(r.f1 == 0.5);
}

TEST_CASE("AUPRC examples") {
  CHECK(auprc(std::vector<int>{1, 0}, std::vector<double>{0.9, 0.1}) == 1.0);
  CHECK(auprc(std::vector<int>{0, 1}, std::vector<double>{0.9, 0.1}) == 0.5);
  CHECK(code_of([] { auprc(std::vector<int>{0, 0}, std::vector<double>{0.3, 0.1}); }) == ErrorCode::no_positives);
  // reference value from a standard average-precision implementation, ties included
  std::vector<int> y{1, 0, 1, 1, 0, 0, 1, 0};
  std::vector<double> s{0.9, 0.8, 0.8, 0.4, 0.4, 0.3, 0.2, 0.1};
  CHECK(std::abs(auprc(y, s) - 0.7095238095238094) < 1e-12);
}

TEST_CASE("AUPRC matches the brute-force oracle and is rank invariant") {
  std::mt19937_64 rng(123);
  for (int t = 0; t < 200; ++t) {
    const int n = std::uniform_int_distribution<int>(1, 60)(rng);
    std::vector<int> y(n);
    std::vector<double> s(n);
    std::uniform_int_distribution<int> coarse(0, 9);
    for (int i = 0; i < n; ++i) {
      y[i] = coarse(rng) < 4;
      s[i] = coarse(rng) / 10.0;  // coarse scores force ties
    }
    y[0] = 1;
    CHECK(std::abs(auprc(y, s) - oracle::auprc_brute(y, s)) <= 1e-9);
    std::vector<double> mono(n);
    for (int i = 0; i < n; ++i) mono[i] = std::exp(3 * s[i]) - 7;
    CHECK(auprc(y, mono) == auprc(y, s));
  }
}

TEST_CASE("threshold calibration examples") {
  auto c = calibrate_threshold(std::vector<double>{0.2, 0.8}, std::vector<int>{0, 1});
  CHECK(c.tau == 0.8);
  CHECK(c.val_f1 == 1.0);
  auto all_pos = calibrate_threshold(std::vector<double>{0.3, 0.6, 0.9}, std::vector<int>{1, 1, 1});
  CHECK(all_pos.tau == 0.0);
  CHECK(code_of([] { calibrate_threshold(std::vector<double>{0.3, 0.6}, std::vector<int>{0, 0}); }) ==
        ErrorCode::single_class);
  CHECK(apply_threshold(std::vector<double>{0.1, 0.5, 0.7}, 0.5) == std::vector<int>{0, 1, 1});
}

TEST_CASE("calibrated threshold is optimal over the whole grid") {
  std::mt19937_64 rng(77);
  for (int t = 0; t < 100; ++t) {
    const int n = 100;
    std::vector<int> y(n);
    std::vector<double> s(n);
    std::uniform_real_distribution<double> u(0, 1);
    for (int i = 0; i < n; ++i) {
      y[i] = u(rng) < 0.3;
      s[i] = std::round(std::clamp(0.3 * y[i] + 0.7 * u(rng), 0.0, 1.0) * 50) / 50;
    }
    y[0] = 1;
    auto c = calibrate_threshold(s, y);
    std::set<double> grid(s.begin(), s.end());
    grid.insert(0.0);
    grid.insert(1.0);
    const double best = oracle::f1_at(y, s, c.tau);
    CHECK(c.val_f1 == doctest::Approx(best).epsilon(1e-12));
    for (double tau : grid) {
      CHECK(best >= oracle::f1_at(y, s, tau));
      if (tau < c.tau) CHECK(best > oracle::f1_at(y, s, tau));
    }
  }
}

TEST_CASE("summary statistics") {
  auto one = summarize(std::vector<double>{0.5});
  CHECK(one.mean == 0.5);
  CHECK_FALSE(one.std.has_value());
  auto three = summarize(std::vector<double>{1, 2, 3});
  CHECK(three.mean == 2.0);
  CHECK(*three.std == doctest::Approx(1.0));
}

namespace {

AnovaGrid reference_grid() {
  return {{{0.0038, 0.016, 0.0592}, {0.0531, 0.0539, 0.1008}, {0.1391, 0.1484, 0.1189}},
          {{0.062, 0.1213, 0.1812}, {0.0802, 0.1834, 0.1926}, {0.178, 0.2237, 0.2705}},
          {{0.2123, 0.2913, 0.3161}, {0.291, 0.29, 0.3805}, {0.3271, 0.3628, 0.3977}}};
}

AnovaGrid transpose(const AnovaGrid& g) {
  AnovaGrid t(g[0].size(), std::vector<std::vector<double>>(g.size()));
  for (std::size_t i = 0; i < g.size(); ++i)
    for (std::size_t j = 0; j < g[0].size(); ++j) t[j][i] = g[i][j];
  return t;
}

}  // namespace

TEST_CASE("two-way ANOVA agrees with a reference statistics package") {
  auto r = anova_two_way(reference_grid());
  CHECK(std::abs(r.a.ss - 0.269105787407408) < 1e-12);
  CHECK(std::abs(r.b.ss - 0.045889880740741) < 1e-12);
  CHECK(std::abs(r.ab.ss - 0.000859585925926) < 1e-12);
  CHECK(std::abs(r.ss_residual - 0.036583386666667) < 1e-12);
  CHECK(std::abs(r.a.f - 66.203605170142879) < 1e-8);
  CHECK(std::abs(r.b.f - 11.289521400242155) < 1e-8);
  CHECK(std::abs(r.ab.f - 0.105734788906003) < 1e-9);
  CHECK(std::abs(r.a.p - 0.000000005035408) < 1e-14);
  CHECK(std::abs(r.b.p - 0.000664869422090) < 1e-13);
  CHECK(std::abs(r.ab.p - 0.979018602099585) < 1e-12);
  CHECK(r.a.df == 2);
  CHECK(r.ab.df == 4);
  CHECK(r.df_residual == 18);
  CHECK(std::abs(r.ss_total - (r.a.ss + r.b.ss + r.ab.ss + r.ss_residual)) < 1e-12);
}

TEST_CASE("ANOVA matches the regression oracle on random 3x3x3 grids") {
  std::mt19937_64 rng(5);
  std::normal_distribution<double> noise(0, 1);
  for (int t = 0; t < 50; ++t) {
    AnovaGrid g(3, std::vector<std::vector<double>>(3));
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j)
        for (int k = 0; k < 3; ++k) g[i][j].push_back(0.5 * i + noise(rng) * 0.3);
    auto r = anova_two_way(g);
    auto o = oracle::anova_regression(g);
    CHECK(std::abs(r.a.f - o.f_a) <= 1e-6 * std::max(1.0, o.f_a));
    CHECK(std::abs(r.b.f - o.f_b) <= 1e-6 * std::max(1.0, o.f_b));
    CHECK(std::abs(r.ab.f - o.f_ab) <= 1e-6 * std::max(1.0, o.f_ab));
    CHECK(std::abs(r.a.partial_eta2 - o.eta_a) <= 1e-6);
    CHECK(std::abs(r.b.partial_eta2 - o.eta_b) <= 1e-6);
    CHECK(std::abs(r.ab.partial_eta2 - o.eta_ab) <= 1e-6);
    CHECK(std::abs(r.a.p - oracle::f_survival(r.a.f, 2, 18)) <= 1e-8);
    CHECK(std::abs(r.ab.p - oracle::f_survival(r.ab.f, 4, 18)) <= 1e-8);
  }
}

TEST_CASE("ANOVA symmetry and contract errors") {
  auto g = reference_grid();
  auto r = anova_two_way(g, "GNN", "PLM");
  auto s = anova_two_way(transpose(g), "PLM", "GNN");
  CHECK(r.a.ss == s.b.ss);
  CHECK(r.a.f == s.b.f);
  CHECK(r.a.p == s.b.p);
  CHECK(r.b.partial_eta2 == s.a.partial_eta2);
  CHECK(r.ab.f == s.ab.f);
  CHECK(r.ss_residual == s.ss_residual);

  AnovaGrid flat(3, std::vector<std::vector<double>>(3, std::vector<double>(3, 0.7)));
  CHECK(code_of([&] { anova_two_way(flat); }) == ErrorCode::zero_residual_variance);
  auto unbalanced = g;
  unbalanced[1][2].pop_back();
  CHECK(code_of([&] { anova_two_way(unbalanced); }) == ErrorCode::unbalanced_design);

  AnovaGrid small{{{1, 2}, {2, 4}}, {{3, 3.5}, {5, 6}}};
  auto two = anova_two_way(small);
  CHECK(two.df_residual == 4);
  CHECK(two.a.df == 1);
}

TEST_CASE("F survival function against the continued fraction") {
  for (double f : {0.01, 0.5, 1.0, 3.7, 12.0, 80.0})
    for (auto [d1, d2] : std::vector<std::pair<double, double>>{{1, 4}, {2, 18}, {4, 18}, {3, 100}})
      CHECK(std::abs(f_survival(f, d1, d2) - oracle::f_survival(f, d1, d2)) <= 1e-8);
}
