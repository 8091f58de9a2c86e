#pragma once

// Interpolant operators I_h (the observation channel), observation masks and
// empirical verification of the approximation inequalities
//   type 1: ||u - I_h u|| <= c1 h ||grad u||
//   type 2: ||u - I_h u|| <= c2 h ||grad u|| + c3 h^2 ||Lap u||.

#include <mhdnudge/spectral.hpp>

#include <optional>
#include <string>
#include <string_view>

namespace mhdnudge {

enum class InterpolantKind { SpectralProjection, VolumeAverage, NodalBilinear };

inline std::string_view to_string(InterpolantKind k) {
  switch (k) {
    case InterpolantKind::SpectralProjection: return "SpectralProjection";
    case InterpolantKind::VolumeAverage: return "VolumeAverage";
    case InterpolantKind::NodalBilinear: return "NodalBilinear";
  }
  return "?";
}

inline InterpolantKind parse_interpolant_kind(std::string_view s) {
  if (s == "SpectralProjection") return InterpolantKind::SpectralProjection;
  if (s == "VolumeAverage") return InterpolantKind::VolumeAverage;
  if (s == "NodalBilinear") return InterpolantKind::NodalBilinear;
  throw Error("unknown interpolant kind '" + std::string(s) + "'");
}

struct InterpolantSpec {
  InterpolantKind kind = InterpolantKind::SpectralProjection;
  double h = 0.125;
  int type_class = 1;
  std::optional<double> c1;
  std::optional<double> c2;
  std::optional<double> c3;

  // Number of observation cells (or retained modes) per axis, 1/h.
  int resolution() const { return static_cast<int>(std::lround(1.0 / h)); }
};

inline InterpolantSpec make_interpolant(InterpolantKind kind, double h) {
  if (!(h > 0.0) || h > 1.0) throw Error("interpolant resolution h must lie in (0, 1]");
  const double inv = 1.0 / h;
  if (std::abs(inv - std::round(inv)) > 1e-9 * inv) throw Error("1/h must be an integer, got h=" + format_double(h));
  InterpolantSpec s;
  s.kind = kind;
  s.h = 1.0 / std::round(inv);
  s.type_class = kind == InterpolantKind::NodalBilinear ? 2 : 1;
  return s;
}

inline void check_compatible(const InterpolantSpec& s, const Grid& g) {
  if (s.kind == InterpolantKind::SpectralProjection) return;
  const int cells = s.resolution();
  if (g.n() % cells != 0)
    throw Error("1/h = " + std::to_string(cells) + " does not divide grid size " + std::to_string(g.n()));
}

namespace detail {

inline SpectralScalar project_low_modes(const SpectralScalar& u, int N) {
  SpectralScalar out = u;
  const Grid& g = u.grid();
  for (int i = 0; i < g.n(); ++i)
    for (int j = 0; j < g.columns(); ++j)
      if (g.k_max_norm(i, j) > N) out.at(i, j) = 0.0;
  out.at(0, 0) = 0.0;
  return out;
}

inline SpectralScalar volume_average(const SpectralScalar& u, int cells) {
  const Grid& g = u.grid();
  const int n = g.n(), m = n / cells;
  const auto x = inverse_transform(u);
  std::vector<double> out(x.size());
  for (int ci = 0; ci < cells; ++ci)
    for (int cj = 0; cj < cells; ++cj) {
      double acc = 0.0;
      for (int a = 0; a < m; ++a)
        for (int b = 0; b < m; ++b) acc += x[static_cast<std::size_t>(ci * m + a) * n + (cj * m + b)];
      acc /= double(m) * m;
      for (int a = 0; a < m; ++a)
        for (int b = 0; b < m; ++b) out[static_cast<std::size_t>(ci * m + a) * n + (cj * m + b)] = acc;
    }
  return forward_transform(g, out).field;
}

inline SpectralScalar nodal_bilinear(const SpectralScalar& u, int cells) {
  const Grid& g = u.grid();
  const int n = g.n(), m = n / cells;
  const auto x = inverse_transform(u);
  auto node = [&](int a, int b) {
    a = (a % cells + cells) % cells;
    b = (b % cells + cells) % cells;
    return x[static_cast<std::size_t>(a * m) * n + b * m];
  };
  std::vector<double> out(x.size());
  for (int i = 0; i < n; ++i) {
    const int a = i / m;
    const double s = double(i - a * m) / m;
    for (int j = 0; j < n; ++j) {
      const int b = j / m;
      const double r = double(j - b * m) / m;
      out[static_cast<std::size_t>(i) * n + j] = (1 - s) * (1 - r) * node(a, b) + s * (1 - r) * node(a + 1, b) +
                                                 (1 - s) * r * node(a, b + 1) + s * r * node(a + 1, b + 1);
    }
  }
  return forward_transform(g, out).field;
}

}  // namespace detail

// Linear observation operator; outputs are mean-zero.
inline SpectralScalar apply_interpolant(const InterpolantSpec& spec, const SpectralScalar& u) {
  check_compatible(spec, u.grid());
  switch (spec.kind) {
    case InterpolantKind::SpectralProjection: return detail::project_low_modes(u, spec.resolution());
    case InterpolantKind::VolumeAverage: return detail::volume_average(u, spec.resolution());
    case InterpolantKind::NodalBilinear: return detail::nodal_bilinear(u, spec.resolution());
  }
  throw Error("unreachable interpolant kind");
}

inline SpectralVector apply_interpolant(const InterpolantSpec& spec, const SpectralVector& u) {
  return SpectralVector(apply_interpolant(spec, u[0]), apply_interpolant(spec, u[1]));
}

// ---------------------------------------------------------------------------
// Observation masks

// All, FirstComponent and VOnly are the Elsasser-variable algorithms. WOnly
// is the mirror of VOnly; VelocityOnly and MagneticOnly observe u or b.
enum class ObservationMask { All, FirstComponent, VOnly, WOnly, VelocityOnly, MagneticOnly };

inline std::string_view to_string(ObservationMask m) {
  switch (m) {
    case ObservationMask::All: return "All";
    case ObservationMask::FirstComponent: return "FirstComponent";
    case ObservationMask::VOnly: return "VOnly";
    case ObservationMask::WOnly: return "WOnly";
    case ObservationMask::VelocityOnly: return "VelocityOnly";
    case ObservationMask::MagneticOnly: return "MagneticOnly";
  }
  return "?";
}

inline ObservationMask parse_mask(std::string_view s) {
  for (auto m : {ObservationMask::All, ObservationMask::FirstComponent, ObservationMask::VOnly, ObservationMask::WOnly,
                 ObservationMask::VelocityOnly, ObservationMask::MagneticOnly})
    if (to_string(m) == s) return m;
  throw Error("unknown observation mask '" + std::string(s) + "'");
}

// Linear map from (dv, dw) amplitudes to the observed feedback pair, as a
// 2x2 matrix acting on the Elsasser pair.
struct MaskCoupling {
  double vv, vw, wv, ww;
};

inline MaskCoupling mask_coupling(ObservationMask m, bool swapped) {
  switch (m) {
    case ObservationMask::All:
    case ObservationMask::FirstComponent: return {1, 0, 0, 1};
    case ObservationMask::VOnly: return {1, 0, 0, 0};
    case ObservationMask::WOnly: return {0, 0, 0, 1};
    case ObservationMask::VelocityOnly:
      return swapped ? MaskCoupling{0.5, -0.5, -0.5, 0.5} : MaskCoupling{0.5, 0.5, 0.5, 0.5};
    case ObservationMask::MagneticOnly:
      return swapped ? MaskCoupling{0.5, 0.5, 0.5, 0.5} : MaskCoupling{0.5, -0.5, -0.5, 0.5};
  }
  throw Error("unreachable mask");
}

struct Feedback {
  SpectralVector v;
  SpectralVector w;
};

// Applies I_h to the observed part of the difference (dv, dw) and embeds it
// back into the Elsasser equations. Not scaled by mu and not projected.
inline Feedback apply_masked(const InterpolantSpec& spec, ObservationMask mask, const SpectralVector& dv,
                             const SpectralVector& dw, bool swapped = false) {
  const Grid& g = dv.grid();
  if (mask == ObservationMask::FirstComponent) {
    SpectralVector fv(apply_interpolant(spec, dv[0]), SpectralScalar(g));
    SpectralVector fw(apply_interpolant(spec, dw[0]), SpectralScalar(g));
    return {std::move(fv), std::move(fw)};
  }
  const MaskCoupling c = mask_coupling(mask, swapped);
  auto combine = [&](double a, double b) {
    SpectralVector out = zero_vector(g);
    if (a != 0.0) out.axpy(a, dv);
    if (b != 0.0) out.axpy(b, dw);
    return out;
  };
  // Observe the combination once, then distribute it.
  if (mask == ObservationMask::VelocityOnly || mask == ObservationMask::MagneticOnly) {
    const SpectralVector obs = apply_interpolant(spec, combine(2 * c.vv, 2 * c.vw));
    const double sign_w = c.wv / c.vv;
    return {0.5 * obs, (0.5 * sign_w) * obs};
  }
  SpectralVector fv = c.vv != 0.0 ? apply_interpolant(spec, dv) : zero_vector(g);
  SpectralVector fw = c.ww != 0.0 ? apply_interpolant(spec, dw) : zero_vector(g);
  return {std::move(fv), std::move(fw)};
}

// Action of P I_h restricted to the observed components on a divergence-free
// mode k, for the spectral projection: a scalar factor times the coupling.
inline double spectral_feedback_factor(const InterpolantSpec& spec, ObservationMask mask, const Grid& g, int i,
                                       int j) {
  if (g.k_max_norm(i, j) > spec.resolution()) return 0.0;
  if (mask != ObservationMask::FirstComponent) return 1.0;
  // P[(u1, 0)] = (k2^2/|k|^2) u for divergence-free u.
  const double a = g.k1(i), b = g.k2(j);
  const double kk = a * a + b * b;
  return kk > 0.0 ? b * b / kk : 0.0;
}

// ---------------------------------------------------------------------------
// Verification of the approximation inequalities

inline constexpr double constant_inflation = 1.05;

namespace detail {

struct SampleNorms {
  double residual;  // ||u - I_h u||
  double grad;      // h ||grad u||
  double lap;       // h^2 ||Lap u||
};

inline SampleNorms sample_norms(const InterpolantSpec& spec, const SpectralScalar& u) {
  const SpectralScalar r = u - apply_interpolant(spec, u);
  return {l2_norm(r), spec.h * h1_seminorm(u), spec.h * spec.h * h2_seminorm(u)};
}

// Random band-limited scalar fields with random spectral slope and bandwidth.
template <class Visit>
void for_each_random_field(const Grid& g, int count, std::uint64_t seed, Visit&& visit) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> slope(0.0, 3.0);
  std::uniform_int_distribution<int> band(1, g.cutoff());
  for (int s = 0; s < count; ++s) {
    const double decay = slope(rng);
    const int kmax = band(rng);
    const std::uint64_t sub = rng();
    visit(random_scalar_field(g, sub, decay, kmax));
  }
}

// Single Fourier modes (cos and sin phases) inside the dealiasing cutoff.
template <class Visit>
void for_each_probe(const Grid& g, Visit&& visit) {
  const int kc = g.cutoff();
  for (int a = 0; a <= kc; ++a)
    for (int b = -kc; b <= kc; ++b) {
      if (a == 0 && b <= 0) continue;
      for (cplx phase : {cplx(1.0, 0.0), cplx(0.0, 1.0)}) {
        SpectralScalar s(g);
        s.set_mode(a, b, phase);
        visit(s);
      }
    }
}

}  // namespace detail

struct Type1Report {
  InterpolantKind kind;
  double h;
  double empirical_c1;  // sup of the ratio over the sample set
  double c1;            // inflated, stored constant
  int n_samples;
  std::uint64_t seed;
};

struct Type2Report {
  InterpolantKind kind;
  double h;
  double empirical_c2, empirical_c3;
  double c2, c3;
  int n_samples;
  std::uint64_t seed;
};

// Sup of ||u - I_h u|| / (h ||grad u||) over single-mode probes and
// `n_samples` random band-limited fields.
inline Type1Report verify_type1_bound(const InterpolantSpec& spec, const Grid& g, int n_samples, std::uint64_t seed) {
  if (spec.type_class != 1) throw Error("type-1 verification requested for a type-2 interpolant");
  check_compatible(spec, g);
  double worst = 0.0;
  auto visit = [&](const SpectralScalar& u) {
    const auto s = detail::sample_norms(spec, u);
    if (s.grad > 0.0) worst = std::max(worst, s.residual / s.grad);
  };
  detail::for_each_probe(g, visit);
  detail::for_each_random_field(g, n_samples, seed, visit);
  return {spec.kind, spec.h, worst, constant_inflation * worst, n_samples, seed};
}

// Minimal (c2, c3) over the sample set: minimises the summed bound
// sum_i (c2 a_i + c3 b_i) subject to r_i <= c2 a_i + c3 b_i for every
// sample, then inflates both constants.
inline Type2Report verify_type2_bound(const InterpolantSpec& spec, const Grid& g, int n_samples, std::uint64_t seed) {
  if (spec.type_class != 2) throw Error("type-2 verification requested for a type-1 interpolant");
  check_compatible(spec, g);
  std::vector<detail::SampleNorms> samples;
  auto visit = [&](const SpectralScalar& u) {
    const auto s = detail::sample_norms(spec, u);
    if (s.grad > 0.0) samples.push_back(s);
  };
  detail::for_each_probe(g, visit);
  detail::for_each_random_field(g, n_samples, seed, visit);

  double sum_a = 0.0, sum_b = 0.0, c2_hi = 0.0;
  for (const auto& s : samples) {
    sum_a += s.grad;
    sum_b += s.lap;
    c2_hi = std::max(c2_hi, s.residual / s.grad);
  }
  auto c3_for = [&](double c2) {
    double c3 = 0.0;
    for (const auto& s : samples) c3 = std::max(c3, (s.residual - c2 * s.grad) / s.lap);
    return c3;
  };
  auto objective = [&](double c2) { return c2 * sum_a + c3_for(c2) * sum_b; };
  // The objective is convex and piecewise linear in c2.
  double lo = 0.0, hi = c2_hi;
  const double ratio = 0.5 * (std::sqrt(5.0) - 1.0);
  for (int it = 0; it < 200; ++it) {
    const double m1 = hi - ratio * (hi - lo), m2 = lo + ratio * (hi - lo);
    if (objective(m1) <= objective(m2)) hi = m2; else lo = m1;
  }
  double c2 = 0.5 * (lo + hi);
  for (double cand : {0.0, c2_hi})
    if (objective(cand) < objective(c2)) c2 = cand;
  const double c3 = c3_for(c2);
  return {spec.kind, spec.h, c2, c3, constant_inflation * c2, constant_inflation * c3, n_samples, seed};
}

// Number of fresh random fields violating the stored inequality.
inline int count_type1_violations(const InterpolantSpec& spec, double c1, const Grid& g, int n_samples,
                                  std::uint64_t seed) {
  int bad = 0;
  detail::for_each_random_field(g, n_samples, seed, [&](const SpectralScalar& u) {
    const auto s = detail::sample_norms(spec, u);
    if (s.residual > c1 * s.grad) ++bad;
  });
  return bad;
}

inline int count_type2_violations(const InterpolantSpec& spec, double c2, double c3, const Grid& g, int n_samples,
                                  std::uint64_t seed) {
  int bad = 0;
  detail::for_each_random_field(g, n_samples, seed, [&](const SpectralScalar& u) {
    const auto s = detail::sample_norms(spec, u);
    if (s.residual > c2 * s.grad + c3 * s.lap) ++bad;
  });
  return bad;
}

}  // namespace mhdnudge
