#include <mhdnudge/mhdnudge.hpp>

#include <gtest/gtest.h>

#include <cmath>

using namespace mhdnudge;

namespace {

const Grid g32(32);

ForcingSpec low_mode_forcing(double scale) {
  auto f = random_divfree_field(g32, 101, 1.0, 2);
  auto g = random_divfree_field(g32, 202, 1.0, 2);
  f *= scale;
  g *= scale;
  return ForcingSpec::steady(f, g);
}

ElsasserState reference_state(double amp) {
  auto v = random_divfree_field(g32, 7, 1.0, 6);
  auto w = random_divfree_field(g32, 8, 1.0, 6);
  v *= amp / l2_norm(v);
  w *= amp / l2_norm(w);
  return ElsasserState(v, w);
}

NudgingConfig config(double mu, InterpolantKind kind, double h, ObservationMask mask) {
  NudgingConfig c;
  c.mu = mu;
  c.interpolant = make_interpolant(kind, h);
  c.mask = mask;
  return c;
}

double error_l2(const AssimilationPair& p) { return error_norms(p.reference, p.assimilated).l2(); }

}  // namespace

TEST(Init, DefaultIsZero) {
  const auto ref = reference_state(0.3);
  const auto pair = init_assimilation(ref);
  EXPECT_EQ(l2_norm(pair.assimilated.v), 0.0);
  EXPECT_EQ(l2_norm(pair.assimilated.w), 0.0);
  EXPECT_EQ(pair.assimilated.t, ref.t);
}

TEST(Init, CopyGivesZeroError) {
  const auto pair = init_assimilation(reference_state(0.3), InitMode::CopyReference);
  EXPECT_EQ(error_l2(pair), 0.0);
}

TEST(Init, CustomMustBeDivergenceFree) {
  const auto ref = reference_state(0.3);
  const ElsasserState good(random_divfree_field(g32, 3, 1.0, 5), random_divfree_field(g32, 4, 1.0, 5));
  EXPECT_NO_THROW(init_assimilation(ref, InitMode::Custom, good));
  const SpectralVector rough(random_scalar_field(g32, 5, 1.0, 5), random_scalar_field(g32, 6, 1.0, 5));
  EXPECT_THROW(init_assimilation(ref, InitMode::Custom, ElsasserState(rough, good.w)), Error);
  EXPECT_THROW(init_assimilation(ref, InitMode::Custom), Error);
}

TEST(Term, VanishesOnEqualStatesAndZeroGain) {
  const auto p = derive_elsasser_params(5.0, 5.0);
  const auto ref = reference_state(0.3);
  const auto c = config(50.0, InterpolantKind::SpectralProjection, 0.125, ObservationMask::All);
  auto n = nudging_term(c, p, ref, ref);
  EXPECT_EQ(l2_norm(n.v) + l2_norm(n.w), 0.0);
  const auto other = init_assimilation(ref).assimilated;
  n = nudging_term(config(0.0, InterpolantKind::VolumeAverage, 0.25, ObservationMask::All), p, ref, other);
  EXPECT_EQ(l2_norm(n.v) + l2_norm(n.w), 0.0);
}

TEST(Term, FullProjectionEqualsScaledDifference) {
  const auto p = derive_elsasser_params(5.0, 5.0);
  const auto ref = reference_state(0.3);
  const ElsasserState other(random_divfree_field(g32, 3, 1.0, 10), random_divfree_field(g32, 4, 1.0, 10));
  const double mu = 7.5;
  const auto c = config(mu, InterpolantKind::SpectralProjection, 1.0 / g32.cutoff(), ObservationMask::All);
  const auto n = nudging_term(c, p, ref, other);
  EXPECT_LT(l2_norm(n.v - mu * (ref.v - other.v)), 1e-13);
  EXPECT_LT(l2_norm(n.w - mu * (ref.w - other.w)), 1e-13);
}

TEST(Term, ClockMismatchIsRejected) {
  const auto p = derive_elsasser_params(5.0, 5.0);
  auto ref = reference_state(0.3);
  auto other = ref;
  other.t = 1.0;
  EXPECT_THROW(nudging_term(config(1.0, InterpolantKind::SpectralProjection, 0.125, ObservationMask::All), p, ref,
                            other),
               Error);
}

TEST(Stepper, SynchronizedStateIsAbsorbing) {
  const auto p = derive_elsasser_params(5.0, 5.0);
  for (auto [kind, mask] : {std::pair{InterpolantKind::SpectralProjection, ObservationMask::All},
                            {InterpolantKind::SpectralProjection, ObservationMask::FirstComponent},
                            {InterpolantKind::SpectralProjection, ObservationMask::VOnly},
                            {InterpolantKind::NodalBilinear, ObservationMask::FirstComponent}}) {
    CoupledStepper stepper(p, low_mode_forcing(4.0), config(50.0, kind, 0.125, mask));
    auto pair = init_assimilation(reference_state(0.3), InitMode::CopyReference);
    double worst = 0.0;
    for (int k = 0; k < 1000; ++k) {
      pair = stepper.step(pair, 0.005);
      worst = std::max(worst, error_l2(pair));
    }
    EXPECT_LE(worst, 1e-10) << to_string(kind) << " " << to_string(mask);
  }
}

TEST(Stepper, ZeroGainDoesNotSynchronizeWithinATurnover) {
  const auto p = derive_elsasser_params(5.0, 5.0);
  CoupledStepper stepper(p, low_mode_forcing(4.0), config(0.0, InterpolantKind::SpectralProjection, 0.125,
                                                           ObservationMask::All));
  auto pair = init_assimilation(reference_state(0.3));
  const double e0 = error_l2(pair);
  for (int k = 0; k < 200; ++k) pair = stepper.step(pair, 0.005);
  EXPECT_GT(error_l2(pair), 1e-6 * e0);

  // The assimilated state solves the plain system from zero data.
  MhdIntegrator plain(p, low_mode_forcing(4.0));
  ElsasserState s(g32);
  for (int k = 0; k < 200; ++k) s = plain.step(s, 0.005);
  EXPECT_EQ(s.v, pair.assimilated.v);
  EXPECT_EQ(s.w, pair.assimilated.w);
}

TEST(Stepper, FullObservationConverges) {
  const auto p = derive_elsasser_params(5.0, 5.0);
  CoupledStepper stepper(p, low_mode_forcing(4.0), config(50.0, InterpolantKind::SpectralProjection, 0.125,
                                                           ObservationMask::All));
  auto pair = init_assimilation(reference_state(0.3));
  const double e0 = error_l2(pair);
  for (int k = 0; k < 400; ++k) pair = stepper.step(pair, 0.005);
  EXPECT_LT(error_l2(pair), 1e-6 * e0);
}

TEST(Stepper, ExplicitGainTooLargeReportsAdmissibleStep) {
  const auto p = derive_elsasser_params(5.0, 5.0);
  CoupledStepper stepper(p, low_mode_forcing(1.0), config(400.0, InterpolantKind::VolumeAverage, 0.125,
                                                          ObservationMask::All));
  const auto pair = init_assimilation(reference_state(0.1));
  try {
    stepper.step(pair, 0.005);
    FAIL() << "expected explicit nudging instability";
  } catch (const ExplicitNudgingUnstable& e) {
    EXPECT_DOUBLE_EQ(e.admissible(), 1.0 / 400.0);
  }
  EXPECT_NO_THROW(stepper.step(pair, 0.002));
}

TEST(Stepper, AssimilatedStateStaysDivergenceFreeAndMeanZero) {
  const auto p = derive_elsasser_params(4.0, 8.0);
  for (auto kind : {InterpolantKind::SpectralProjection, InterpolantKind::VolumeAverage,
                    InterpolantKind::NodalBilinear}) {
    CoupledStepper stepper(p, low_mode_forcing(4.0), config(50.0, kind, 0.125, ObservationMask::FirstComponent));
    auto pair = init_assimilation(reference_state(0.3));
    for (int k = 0; k < 200; ++k) {
      pair = stepper.step(pair, 0.005);
      ASSERT_LT(divergence_defect(pair.assimilated.v), 1e-10);
      ASSERT_LT(divergence_defect(pair.assimilated.w), 1e-10);
      ASSERT_EQ(pair.assimilated.v[0].at(0, 0), cplx(0.0, 0.0));
    }
  }
}

TEST(Config, ValidationRejectsBadInput) {
  auto c = config(-1.0, InterpolantKind::SpectralProjection, 0.125, ObservationMask::All);
  EXPECT_THROW(validate(c, g32), Error);
  c.mu = 1.0;
  SpectralVector biased(g32);
  biased[0].at(0, 0) = 1.0;
  c.eps1 = Perturbation{biased, Modulation{}};
  EXPECT_THROW(validate(c, g32), Error);
}

TEST(Run, PerturbationsWithDecayingEnvelopeStillConverge) {
  const auto p = derive_elsasser_params(5.0, 5.0);
  auto c = config(50.0, InterpolantKind::SpectralProjection, 0.125, ObservationMask::All);
  const Modulation envelope{1.0, 0.0, 0.0, 2.0};
  c.eps1 = Perturbation{0.05 * random_divfree_field(g32, 31, 1.0, 4), envelope};
  c.eps2 = Perturbation{0.05 * random_divfree_field(g32, 32, 1.0, 4), envelope};
  ForcingSpec delta(g32);
  delta.add({0.5 * random_divfree_field(g32, 33, 1.0, 2), 0.5 * random_divfree_field(g32, 34, 1.0, 2), envelope});
  c.delta = delta;
  RunSpec spec{p, low_mode_forcing(4.0), reference_state(0.3)};
  spec.dt = 0.005;
  spec.horizon = 8.0;
  spec.sample_interval = 0.05;
  const auto res = run_assimilation(c, spec);
  const auto l2 = res.errors.l2();
  EXPECT_TRUE(decreasing_trend(res.errors.times, l2));
  EXPECT_LT(l2.back(), 1e-4 * l2.front());
  EXPECT_TRUE(res.budget.passed());
}

TEST(Run, RecordsSamplesAndBudget) {
  const auto p = derive_elsasser_params(5.0, 5.0);
  RunSpec spec{p, low_mode_forcing(4.0), reference_state(0.3)};
  spec.horizon = 1.0;
  spec.sample_interval = 0.1;
  const auto res =
      run_assimilation(config(50.0, InterpolantKind::SpectralProjection, 0.125, ObservationMask::All), spec);
  EXPECT_EQ(res.errors.size(), 11u);
  EXPECT_EQ(res.trajectory.size(), 11u);
  EXPECT_EQ(res.primitive_errors.size(), 11u);
  EXPECT_EQ(res.step_times.size(), 201u);
  EXPECT_EQ(res.steps, 200);
  EXPECT_EQ(res.budget.residuals.size(), 200u);
  EXPECT_LE(res.max_budget_tolerance_ratio, 1.0);
  EXPECT_NEAR(res.final_state.t(), 1.0, 1e-12);
}

TEST(Run, BadSpecIsRejected) {
  const auto p = derive_elsasser_params(5.0, 5.0);
  RunSpec spec{p, low_mode_forcing(4.0), reference_state(0.3)};
  spec.dt = 0.0;
  EXPECT_THROW(run_assimilation(config(1.0, InterpolantKind::SpectralProjection, 0.125, ObservationMask::All), spec),
               Error);
}
