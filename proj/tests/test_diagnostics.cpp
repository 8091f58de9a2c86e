#include <mhdnudge/mhdnudge.hpp>

#include <gtest/gtest.h>

#include <cmath>
#include <random>

using namespace mhdnudge;

namespace {

std::vector<double> times(int count, double dt) {
  std::vector<double> t(count);
  for (int k = 0; k < count; ++k) t[k] = k * dt;
  return t;
}

// Constants with c_L = c = c_tilde = C = 1 and c1 = 1, c2 = 0.5, c3 = 2.
ConstantsLedger unit_constants() {
  ConstantsLedger c;
  for (const char* k : {"c_L", "c_B", "c_T", "c_M", "c", "C", "c_tilde_1st", "c_tilde_T2", "c1"}) c[k] = {1.0, "configured"};
  c["c2"] = {0.5, "configured"};
  c["c3"] = {2.0, "configured"};
  return c;
}

const ElsasserParams unit_gap = derive_elsasser_params(1.0, 1.0);

const TheoremId all_ids[] = {TheoremId::ThmAll,   TheoremId::Thm1st,   TheoremId::ThmV,  TheoremId::ThmH1All,
                             TheoremId::ThmH11st, TheoremId::ThmH1V,   TheoremId::T2Thm1};

}  // namespace

TEST(ErrorNorms, Examples) {
  const Grid g(32);
  const ElsasserState ref(random_divfree_field(g, 1, 1.0, 5), random_divfree_field(g, 2, 1.0, 5));
  auto e = error_norms(ref, ref);
  EXPECT_EQ(e.l2_eta + e.l2_zeta + e.h1_eta + e.h1_zeta, 0.0);
  e = error_norms(ref, ElsasserState(g));
  EXPECT_DOUBLE_EQ(e.l2_eta, l2_norm(ref.v));
  EXPECT_DOUBLE_EQ(e.h1_zeta, h1_seminorm(ref.w));
  SpectralVector d(g);
  d[1].set_mode(2, 0, cplx(0.0, -0.5));  // (0, sin(4 pi x))
  e = error_norms(ElsasserState(d, zero_vector(g)), ElsasserState(g));
  EXPECT_NEAR(e.l2_eta, 1.0 / std::sqrt(2.0), 1e-15);
  EXPECT_NEAR(e.h1_eta, 4.0 * pi / std::sqrt(2.0), 1e-13);
  ElsasserState late(g);
  late.t = 1.0;
  EXPECT_THROW(error_norms(ref, late), Error);
}

TEST(ErrorSeries, RequiresIncreasingTimes) {
  ErrorSeries s;
  s.append({0.0, 1, 1, 1, 1});
  s.append({0.1, 1, 1, 1, 1});
  EXPECT_THROW(s.append({0.1, 1, 1, 1, 1}), Error);
  EXPECT_NEAR(s.l2()[0], std::sqrt(2.0), 1e-15);
}

TEST(Fit, ExactExponential) {
  const auto t = times(200, 0.05);
  std::vector<double> y(t.size());
  for (std::size_t k = 0; k < t.size(); ++k) y[k] = std::exp(-3.0 * t[k]);
  const auto f = fit_exponential_rate(t, y);
  EXPECT_NEAR(f.rate, 3.0, 1e-6);
  EXPECT_GT(f.r2, 0.999999);
  EXPECT_EQ(f.samples, 100u);
}

TEST(Fit, ConstantSeriesHasZeroRate) {
  const auto t = times(50, 0.1);
  const std::vector<double> y(t.size(), 2.5);
  EXPECT_NEAR(fit_exponential_rate(t, y).rate, 0.0, 1e-15);
}

TEST(Fit, ScaleInvariant) {
  const auto t = times(100, 0.1);
  std::vector<double> y(t.size()), z(t.size());
  for (std::size_t k = 0; k < t.size(); ++k) {
    y[k] = std::exp(-1.7 * t[k]) * (1.0 + 0.1 * std::sin(t[k]));
    z[k] = 1e5 * y[k];
  }
  EXPECT_NEAR(fit_exponential_rate(t, y).rate, fit_exponential_rate(t, z).rate, 1e-10);
  EXPECT_NEAR(fit_exponential_rate(t, y).r2, fit_exponential_rate(t, z).r2, 1e-10);
}

TEST(Fit, NoisyExponentialWithinFivePercent) {
  std::mt19937_64 rng(12);
  std::normal_distribution<double> noise(0.0, 0.2);
  const auto t = times(400, 0.02);
  std::vector<double> y(t.size());
  for (std::size_t k = 0; k < t.size(); ++k) y[k] = std::exp(-2.0 * t[k] + noise(rng));
  EXPECT_NEAR(fit_exponential_rate(t, y).rate, 2.0, 0.1);
}

TEST(Fit, DegenerateWindowsAreRejected) {
  const auto t = times(15, 0.1);
  const std::vector<double> y(t.size(), 1.0);
  EXPECT_THROW(fit_exponential_rate(t, y), Error);
  const std::vector<double> flat_t(40, 1.0), flat_y(40, 1.0);
  EXPECT_THROW(fit_exponential_rate(flat_t, flat_y), Error);
  EXPECT_THROW(fit_exponential_rate(t, std::vector<double>(3, 1.0)), Error);
}

TEST(Convergence, CutsAtRoundOffFloor) {
  const auto t = times(400, 0.05);
  std::vector<double> y(t.size());
  for (std::size_t k = 0; k < t.size(); ++k) y[k] = std::max(std::exp(-4.0 * t[k]), 1e-15 * (1.0 + (k % 3)));
  const auto v = evaluate_convergence(t, y);
  EXPECT_TRUE(v.success);
  EXPECT_NEAR(v.fit.rate, 4.0, 1e-6);
  EXPECT_LT(v.floor_time, 7.0);
  const std::vector<double> flat(t.size(), 1.0);
  EXPECT_FALSE(evaluate_convergence(t, flat).success);
}

TEST(Convergence, OnsetAndTrend) {
  const auto t = times(200, 0.05);
  std::vector<double> y(t.size());
  for (std::size_t k = 0; k < t.size(); ++k) y[k] = t[k] < 2.0 ? 1.0 : std::exp(-2.0 * (t[k] - 2.0));
  EXPECT_NEAR(onset_time(t, y, 2.0, std::numeric_limits<double>::infinity()), 2.0, 1e-12);
  EXPECT_TRUE(decreasing_trend(t, y));
  std::vector<double> up(t.size());
  for (std::size_t k = 0; k < t.size(); ++k) up[k] = 1.0 + t[k];
  EXPECT_FALSE(decreasing_trend(t, up));
  EXPECT_THROW(decreasing_trend(times(10, 0.1), std::vector<double>(10, 1.0)), Error);
}

TEST(Constants, DefaultsAndDerivedValues) {
  const auto p = derive_elsasser_params(5.0, 5.0);
  const auto c = default_constants(p);
  const double cL = 1.0 / std::sqrt(two_pi);
  EXPECT_DOUBLE_EQ(require(c, "c_L"), cL);
  EXPECT_DOUBLE_EQ(require(c, "c"), 1.5);
  EXPECT_DOUBLE_EQ(require(c, "C"), 81.0 / 4.0 * std::pow(cL, 8));
  EXPECT_DOUBLE_EQ(require(c, "c_tilde_T2"), std::log(250.0 * 4.0 * (20.0 * pi * pi + 1.0)) / 8.0);
  EXPECT_DOUBLE_EQ(require(c, "c_tilde_1st"), 1.0 + std::log(16.0 * 2.25 / (pi * pi * 0.04)));
  EXPECT_EQ(c.at("C").provenance, "derived");
  EXPECT_EQ(c.at("c_L").provenance, "default");
  EXPECT_THROW(require(c, "c1"), Error);
}

TEST(Thresholds, ThmAllHandValues) {
  const auto c = unit_constants();
  for (double G : {0.0, 1.0, 2.0}) {
    const auto t = theorem_thresholds(TheoremId::ThmAll, G, unit_gap, c);
    EXPECT_NEAR(t.mu_min, 2.0 * pi * pi * G * G, 1e-12);
    if (G == 0.0) {
      EXPECT_TRUE(std::isinf(t.h_max));
    } else {
      EXPECT_NEAR(t.h_max, 1.0 / std::sqrt(2.0 * pi * pi * G * G * 1.1), 1e-12);
    }
  }
  EXPECT_NEAR(threshold_mu(TheoremId::ThmAll, 2.0, unit_gap, c) / threshold_mu(TheoremId::ThmAll, 1.0, unit_gap, c),
              4.0, 1e-12);
}

TEST(Thresholds, AbridgedAndTypeTwoHandValues) {
  const auto c = unit_constants();
  EXPECT_EQ(threshold_mu(TheoremId::Thm1st, 0.0, unit_gap, c), 0.0);
  EXPECT_NEAR(threshold_mu(TheoremId::Thm1st, 1.0, unit_gap, c), 64.0 * pi * pi, 1e-9);
  EXPECT_NEAR(threshold_mu(TheoremId::Thm1st, 2.0, unit_gap, c), 128.0 * pi * pi * (17.0 + 2.0 * std::log(2.0)),
              1e-9);
  EXPECT_EQ(threshold_mu(TheoremId::ThmV, 0.0, unit_gap, c), 0.0);
  EXPECT_NEAR(threshold_mu(TheoremId::ThmV, 1.0, unit_gap, c), 25.0 * pi * pi / 16.0, 1e-12);
  EXPECT_NEAR(threshold_mu(TheoremId::ThmV, 2.0, unit_gap, c), 16.0 * pi * pi, 1e-12);
  EXPECT_EQ(threshold_mu(TheoremId::T2Thm1, 0.0, unit_gap, c), 0.0);
  const double t2 = 2000.0 * 4.0 * (20.0 * pi * pi + 1.0) * 8.0 * std::exp(2.0) * (2.0 + std::log(2.0));
  EXPECT_NEAR(threshold_mu(TheoremId::T2Thm1, 1.0, unit_gap, c), t2, 1e-9 * t2);
  EXPECT_NEAR(threshold_h(TheoremId::T2Thm1, 10.0, unit_gap, c), std::sqrt(1.0 / 40.0), 1e-15);
}

TEST(Thresholds, H1VariantTightensByTwoRootTwo) {
  const auto c = unit_constants();
  for (auto [l2, h1] : {std::pair{TheoremId::ThmAll, TheoremId::ThmH1All}, {TheoremId::Thm1st, TheoremId::ThmH11st},
                        {TheoremId::ThmV, TheoremId::ThmH1V}})
    for (double mu : {1.0, 50.0, 1e4}) {
      EXPECT_NEAR(threshold_h(h1, mu, unit_gap, c), threshold_h(l2, mu, unit_gap, c) / (2.0 * std::sqrt(2.0)), 1e-15);
      EXPECT_EQ(threshold_mu(h1, 1.5, unit_gap, c), threshold_mu(l2, 1.5, unit_gap, c));
    }
}

TEST(Thresholds, Monotone) {
  const auto p = derive_elsasser_params(5.0, 5.0);
  auto c = default_constants(p);
  c["c1"] = {0.1, "configured"};
  c["c2"] = {0.2, "configured"};
  c["c3"] = {0.05, "configured"};
  for (auto id : all_ids) {
    double prev_mu = -1.0;
    for (double G = 0.0; G <= 20.0; G += 0.25) {
      const double mu = threshold_mu(id, G, p, c);
      EXPECT_GE(mu, prev_mu) << to_string(id) << " G=" << G;
      prev_mu = mu;
    }
    double prev_h = std::numeric_limits<double>::infinity();
    for (double mu = 0.5; mu <= 1e6; mu *= 2.0) {
      const double h = threshold_h(id, mu, p, c);
      EXPECT_LE(h, prev_h) << to_string(id);
      prev_h = h;
    }
  }
}

TEST(Thresholds, MissingConstantsAreReportedAndUsedOnesRecorded) {
  ConstantsLedger c;
  EXPECT_THROW(threshold_mu(TheoremId::ThmAll, 1.0, unit_gap, c), Error);
  c["c_L"] = {1.0, "configured"};
  EXPECT_THROW(theorem_thresholds(TheoremId::ThmAll, 1.0, unit_gap, c), Error);
  c["c1"] = {0.2, "empirical"};
  const auto t = theorem_thresholds(TheoremId::ThmAll, 1.0, unit_gap, c);
  EXPECT_EQ(t.constants_used.size(), 2u);
  EXPECT_EQ(t.constants_used.at("c1").provenance, "empirical");
  EXPECT_THROW(threshold_mu(TheoremId::ThmAll, -1.0, unit_gap, c), Error);
  EXPECT_EQ(parse_theorem_id("ThmH11st"), TheoremId::ThmH11st);
  EXPECT_THROW(parse_theorem_id("Thm9"), Error);
}

TEST(Gronwall, ConstantPositive) {
  const auto t = times(101, 0.1);
  const std::vector<double> psi(t.size(), 0.7);
  const auto r = gronwall_condition_check(t, psi, 1.0);
  EXPECT_NEAR(r.min_window_average, 0.7, 1e-12);
  EXPECT_EQ(r.max_negative_average, 0.0);
  EXPECT_TRUE(r.conditions_hold);
}

TEST(Gronwall, AlternatingSignsFail) {
  const auto t = times(1001, 0.01);
  std::vector<double> psi(t.size());
  for (std::size_t k = 0; k < psi.size(); ++k) psi[k] = (k / 10) % 2 == 0 ? 1.0 : -1.0;
  const auto r = gronwall_condition_check(t, psi, 1.0);
  EXPECT_LT(std::abs(r.min_window_average), 0.06);
  EXPECT_FALSE(r.conditions_hold);
  EXPECT_THROW(gronwall_condition_check(times(20, 0.1), std::vector<double>(20, 1.0), 1.0), Error);
}

TEST(IntBound, DecayedUnforcedStatePasses) {
  const auto p = derive_elsasser_params(5.0, 5.0);
  const auto t = times(400, 0.01);
  std::vector<double> z(t.size());
  for (std::size_t k = 0; k < z.size(); ++k) z[k] = 1e-30 * std::exp(-t[k]);
  const auto r = check_int_bound(t, z, 0.0, p);
  EXPECT_TRUE(r.passed);
  EXPECT_EQ(r.bound, 0.0);
}

TEST(IntBound, BoundFormulaAndSensitivity) {
  const auto p = derive_elsasser_params(5.0, 5.0);
  const double a = p.gap(), T = 1.0 / (pi * pi * a), G = 3.0;
  const auto t = times(500, 0.01);
  const double bound = (1.0 + T * pi * pi * a) * a * G * G;
  std::vector<double> z(t.size(), 0.9 * bound / T);
  auto r = check_int_bound(t, z, G, p);
  EXPECT_NEAR(r.bound, 2.0 * a * G * G, 1e-12);
  EXPECT_TRUE(r.passed);
  EXPECT_NEAR(r.worst_margin, 0.1 * bound, 1e-9);
  r = check_int_bound(t, z, G / 2.0, p);
  EXPECT_FALSE(r.passed);
}

TEST(IntBound, SparseWindowsAreRejected) {
  const auto p = derive_elsasser_params(5.0, 5.0);
  const auto t = times(20, 0.2);
  EXPECT_THROW(check_int_bound(t, std::vector<double>(t.size(), 1.0), 1.0, p), Error);
}
