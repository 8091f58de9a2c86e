#include <mhdnudge/mhdnudge.hpp>

#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <sstream>

using namespace mhdnudge;

namespace {

const Grid g32(32);

SpectralVector vector_from(const Grid& g, auto fx, auto fy) {
  return SpectralVector(scalar_from(g, fx), scalar_from(g, fy));
}

double max_abs_diff(const SpectralScalar& a, const SpectralScalar& b) {
  double m = 0.0;
  for (std::size_t k = 0; k < a.coeffs().size(); ++k) m = std::max(m, std::abs(a.coeffs()[k] - b.coeffs()[k]));
  return m;
}

double max_abs_diff(const SpectralVector& a, const SpectralVector& b) {
  return std::max(max_abs_diff(a[0], b[0]), max_abs_diff(a[1], b[1]));
}

SpectralVector random_vector(const Grid& g, std::uint64_t seed, int k_max) {
  return SpectralVector(random_scalar_field(g, seed, 1.0, k_max), random_scalar_field(g, seed + 1000, 1.0, k_max));
}

}  // namespace

TEST(Grid, RejectsOddOrTinySizes) {
  EXPECT_THROW(Grid(7), Error);
  EXPECT_THROW(Grid(33), Error);
  EXPECT_NO_THROW(Grid(8));
}

TEST(Transform, CosineIsConjugatePairWithHalfAmplitude) {
  const auto s = scalar_from(g32, [](double x, double) { return std::cos(two_pi * x); });
  EXPECT_NEAR(std::abs(s.mode(1, 0) - cplx(0.5, 0.0)), 0.0, 1e-14);
  EXPECT_NEAR(std::abs(s.mode(-1, 0) - cplx(0.5, 0.0)), 0.0, 1e-14);
  double others = 0.0;
  for (int i = 0; i < g32.n(); ++i)
    for (int j = 0; j < g32.columns(); ++j)
      if (!(j == 0 && (i == 1 || i == g32.n() - 1))) others = std::max(others, std::abs(s.at(i, j)));
  EXPECT_LT(others, 1e-14);
}

TEST(Transform, ConstantBecomesMeanWithZeroField) {
  std::vector<double> samples(g32.points(), 5.0);
  const auto r = forward_transform(g32, samples);
  EXPECT_NEAR(r.mean, 5.0, 1e-13);
  EXPECT_EQ(l2_norm(r.field), 0.0);
}

TEST(Transform, WrongSampleCountIsRejected) {
  std::vector<double> samples(10, 0.0);
  EXPECT_THROW(forward_transform(g32, samples), Error);
}

TEST(Transform, RoundTripOfArbitrarySamples) {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> dist(-1.0, 1.0);
  std::vector<double> samples(g32.points());
  double mean = 0.0;
  for (auto& x : samples) mean += (x = dist(rng));
  mean /= static_cast<double>(samples.size());
  const auto r = forward_transform(g32, samples);
  EXPECT_NEAR(r.mean, mean, 1e-14);
  const auto back = inverse_transform(r.field);
  double worst = 0.0;
  for (std::size_t k = 0; k < samples.size(); ++k) worst = std::max(worst, std::abs(back[k] + mean - samples[k]));
  EXPECT_LT(worst, 1e-12);
}

TEST(Calculus, LaplacianOfSine) {
  const auto s = scalar_from(g32, [](double x, double) { return std::sin(two_pi * x); });
  const auto lap = laplacian(s);
  auto expected = s;
  expected *= -4.0 * pi * pi;
  EXPECT_LT(max_abs_diff(lap, expected), 1e-12);
}

TEST(Calculus, GradientOfSineInY) {
  const auto s = scalar_from(g32, [](double, double y) { return std::sin(two_pi * y); });
  const auto grad = gradient(s);
  const auto expected = scalar_from(g32, [](double, double y) { return two_pi * std::cos(two_pi * y); });
  EXPECT_LT(l2_norm(grad[0]), 1e-13);
  EXPECT_LT(max_abs_diff(grad[1], expected), 1e-12);
}

TEST(Calculus, GradientAndLaplacianCommute) {
  const auto s = random_scalar_field(g32, 11, 1.0, 10);
  EXPECT_LT(max_abs_diff(gradient(laplacian(s)), laplacian(gradient(s))), 1e-9);
}

TEST(Leray, SingleModeExample) {
  SpectralVector u(g32);
  u[0].set_mode(1, 0, cplx(1.0, 0.0));
  u[1].set_mode(1, 0, cplx(1.0, 0.0));
  const auto p = leray_project(u);
  EXPECT_NEAR(std::abs(p[0].mode(1, 0)), 0.0, 1e-15);
  EXPECT_NEAR(std::abs(p[1].mode(1, 0) - cplx(1.0, 0.0)), 0.0, 1e-15);
  EXPECT_TRUE(p.divergence_free);
}

TEST(Leray, AnnihilatesGradientsAndKeepsDivergenceFreeFields) {
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    const auto phi = random_scalar_field(g32, seed, 1.0, 10);
    EXPECT_LT(l2_norm(leray_project(gradient(phi))), 1e-12 * std::max(1.0, l2_norm(gradient(phi))));
    const auto u = random_divfree_field(g32, seed, 1.0, 10);
    EXPECT_LT(max_abs_diff(leray_project(u), u), 1e-14);
    EXPECT_TRUE(is_divergence_free(u));
    EXPECT_LT(divergence_defect(leray_project(random_vector(g32, seed, 10))), 1e-14);
  }
}

TEST(Leray, IdempotentAndSelfAdjoint) {
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    const auto u = random_vector(g32, seed, 10);
    const auto v = random_vector(g32, seed + 50, 10);
    const auto pu = leray_project(u);
    EXPECT_LT(max_abs_diff(leray_project(pu), pu), 1e-14);
    EXPECT_NEAR(inner_product(pu, v), inner_product(u, leray_project(v)), 1e-12);
  }
}

TEST(Dealias, CutoffBehaviourAndIdempotence) {
  SpectralScalar s(g32);
  s.set_mode(g32.n() / 2, 0, cplx(1.0, 0.0));
  s.set_mode(1, 1, cplx(0.3, 0.2));
  s.set_mode(g32.cutoff() + 1, 0, cplx(1.0, 0.0));
  s.set_mode(0, g32.cutoff(), cplx(0.5, 0.0));
  const auto d = dealias(s);
  EXPECT_EQ(d.mode(g32.n() / 2, 0), cplx(0.0, 0.0));
  EXPECT_EQ(d.mode(g32.cutoff() + 1, 0), cplx(0.0, 0.0));
  EXPECT_EQ(d.mode(1, 1), cplx(0.3, 0.2));
  EXPECT_EQ(d.mode(0, g32.cutoff()), cplx(0.5, 0.0));
  EXPECT_EQ(dealias(d), d);
}

TEST(Norms, SineExample) {
  const auto u = vector_from(g32, [](double x, double) { return std::sin(two_pi * x); }, [](double, double) { return 0.0; });
  EXPECT_NEAR(l2_norm(u), 1.0 / std::sqrt(2.0), 1e-14);
  EXPECT_NEAR(h1_seminorm(u), pi * std::sqrt(2.0), 1e-13);
  EXPECT_NEAR(h2_seminorm(u), 4.0 * pi * pi / std::sqrt(2.0), 1e-11);
}

TEST(Norms, PoincareInequality) {
  for (std::uint64_t seed = 1; seed <= 1000; ++seed) {
    const auto u = random_divfree_field(g32, seed, 0.5 + (seed % 5) * 0.5, 1 + seed % g32.cutoff());
    EXPECT_LE(4.0 * pi * pi * l2_norm_sq(u), h1_seminorm_sq(u) * (1.0 + 1e-12));
  }
}

TEST(Norms, ParsevalMatchesQuadrature) {
  const auto s = random_scalar_field(g32, 5, 1.0, 10);
  const auto phys = inverse_transform(s);
  double quad = 0.0;
  for (double x : phys) quad += x * x;
  quad /= static_cast<double>(g32.points());
  EXPECT_NEAR(l2_norm_sq(s), quad, 1e-12 * quad);
}

TEST(Norms, InnerProductMatchesQuadrature) {
  const auto a = random_scalar_field(g32, 6, 1.0, 10);
  const auto b = random_scalar_field(g32, 7, 1.0, 10);
  const auto pa = inverse_transform(a), pb = inverse_transform(b);
  double quad = 0.0;
  for (std::size_t k = 0; k < pa.size(); ++k) quad += pa[k] * pb[k];
  quad /= static_cast<double>(g32.points());
  EXPECT_NEAR(inner_product(a, b), quad, 1e-12);
}

TEST(Advection, SkewSymmetryForDivergenceFreeTransport) {
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    const auto a = random_divfree_field(g32, seed, 1.0, 5);
    const auto u = random_divfree_field(g32, seed + 100, 1.0, 5);
    const auto v = random_divfree_field(g32, seed + 200, 1.0, 5);
    // Band-limited to k <= 5 so the dealiased products are exact.
    EXPECT_NEAR(inner_product(advect(a, u), u), 0.0, 1e-10);
    EXPECT_NEAR(inner_product(advect(a, u), v), -inner_product(advect(a, v), u), 1e-10);
  }
}

TEST(Advection, GridMismatchIsRejected) {
  const Grid g16(16);
  EXPECT_THROW(advect(zero_vector(g32), zero_vector(g16)), GridMismatch);
  EXPECT_THROW(inner_product(zero_vector(g32), zero_vector(g16)), GridMismatch);
}

TEST(RandomFields, DeterministicAndBandLimited) {
  const auto a = random_divfree_field(g32, 42, 1.0, 4);
  const auto b = random_divfree_field(g32, 42, 1.0, 4);
  const auto c = random_divfree_field(g32, 43, 1.0, 4);
  EXPECT_EQ(a, b);
  EXPECT_FALSE(a == c);
  EXPECT_TRUE(is_divergence_free(a));
  for (int i = 0; i < g32.n(); ++i)
    for (int j = 0; j < g32.columns(); ++j)
      if (g32.k_max_norm(i, j) > 4) {
        EXPECT_EQ(a[0].at(i, j), cplx(0.0, 0.0));
        EXPECT_EQ(a[1].at(i, j), cplx(0.0, 0.0));
      }
  EXPECT_THROW(random_scalar_field(g32, 1, 1.0, g32.cutoff() + 1), Error);
}

TEST(Snapshot, RoundTripIsExact) {
  const auto u = random_divfree_field(g32, 9, 1.0, 10);
  std::stringstream ss;
  write_snapshot(ss, u);
  const auto back = read_snapshot(ss);
  EXPECT_EQ(back, u);
  EXPECT_TRUE(back.divergence_free);
}

TEST(Snapshot, MalformedInputIsRejected) {
  std::stringstream bad("not a snapshot\n");
  EXPECT_THROW(read_snapshot(bad), Error);
  std::stringstream short_rows("mhdnudge-field v1, n=8\n0,0,0,0,0,0\n");
  EXPECT_THROW(read_snapshot(short_rows), Error);
}
