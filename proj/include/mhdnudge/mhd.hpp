#pragma once

// Reference 2D MHD dynamics in Elsasser variables,
//   dv/dt = a Lap v + b Lap w + s (w.grad) v + f - grad P
//   dw/dt = a Lap w + b Lap v -   (v.grad) w + g - grad P
// with a = (1/Re + 1/Rm)/2, b = |1/Re - 1/Rm|/2 and s = -1 (s = +1 when the
// magnetic diffusivity dominates and w is defined as b - u). Pressure is
// removed by Leray projection.

#include <mhdnudge/spectral.hpp>

#include <functional>
#include <limits>
#include <optional>
#include <utility>

namespace mhdnudge {

struct DimensionalParams {
  double nu;      // kinematic viscosity
  double lambda;  // magnetic diffusivity
  double rho0;    // density
  double mu0;     // magnetic permeability
  double L;       // domain side
  double U;       // reference velocity
};

struct ElsasserParams {
  double Re;
  double Rm;
  double alpha;
  double beta;
  bool swapped;  // true iff 1/Re < 1/Rm, i.e. w := b - u

  double gap() const { return alpha - beta; }  // = min(1/Re, 1/Rm)
  double advection_sign_v() const { return swapped ? 1.0 : -1.0; }
};

inline ElsasserParams derive_elsasser_params(double Re, double Rm) {
  if (!(Re > 0.0) || !(Rm > 0.0)) throw Error("Reynolds numbers must be positive");
  const double ir = 1.0 / Re, im = 1.0 / Rm;
  return {Re, Rm, 0.5 * (ir + im), 0.5 * std::abs(ir - im), ir < im};
}

// ---------------------------------------------------------------------------
// Forcing

// m(t) = offset + amplitude * exp(-decay t) * cos(2 pi frequency t)
struct Modulation {
  double amplitude = 0.0;
  double frequency = 0.0;
  double offset = 1.0;
  double decay = 0.0;

  double operator()(double t) const {
    return offset + amplitude * std::exp(-decay * t) * std::cos(two_pi * frequency * t);
  }
  bool persistent() const { return decay <= 0.0 && amplitude != 0.0 && frequency > 0.0; }
  // Range of values taken for arbitrarily large t.
  std::pair<double, double> limit_range() const {
    if (decay > 0.0 || amplitude == 0.0) return {offset, offset};
    if (frequency > 0.0) return {offset - std::abs(amplitude), offset + std::abs(amplitude)};
    return {offset + amplitude, offset + amplitude};
  }
};

struct ForcingTerm {
  SpectralVector f;
  SpectralVector g;
  Modulation modulation;
};

struct ForcePair {
  SpectralVector f;
  SpectralVector g;
};

// Elsasser-form forcing as a sum of modulated terms.
class ForcingSpec {
 public:
  explicit ForcingSpec(Grid grid) : grid_(grid) {}
  ForcingSpec(Grid grid, std::vector<ForcingTerm> terms) : grid_(grid), terms_(std::move(terms)) {}

  static ForcingSpec steady(SpectralVector f, SpectralVector g) {
    Grid grid = f.grid();
    return ForcingSpec(grid, {ForcingTerm{std::move(f), std::move(g), Modulation{}}});
  }

  const Grid& grid() const { return grid_; }
  const std::vector<ForcingTerm>& terms() const { return terms_; }
  void add(ForcingTerm t) { terms_.push_back(std::move(t)); }
  bool empty() const { return terms_.empty(); }

  ForcePair at(double t) const {
    ForcePair p{zero_vector(grid_), zero_vector(grid_)};
    for (const auto& term : terms_) {
      const double m = term.modulation(t);
      if (m == 0.0) continue;
      p.f.axpy(m, term.f);
      p.g.axpy(m, term.g);
    }
    return p;
  }

  ForcingSpec scaled(double s) const {
    ForcingSpec out = *this;
    for (auto& term : out.terms_) {
      term.f *= s;
      term.g *= s;
    }
    return out;
  }

  // limsup_{t->inf} || combine(f(t), g(t)) || where combine is linear. The
  // norm is convex in the single oscillating amplitude, so the supremum is
  // attained at an end of its range.
  template <class Combine>
  double limsup_norm(Combine&& combine) const {
    SpectralVector steady_part = zero_vector(grid_);
    const ForcingTerm* oscillating = nullptr;
    for (const auto& term : terms_) {
      if (term.modulation.persistent()) {
        if (oscillating) throw Error("limsup of forcing with several oscillating terms is not supported");
        oscillating = &term;
        continue;
      }
      const double m = term.modulation.limit_range().first;
      if (m != 0.0) steady_part.axpy(m, combine(term.f, term.g));
    }
    if (!oscillating) return l2_norm(steady_part);
    const auto [lo, hi] = oscillating->modulation.limit_range();
    const SpectralVector shape = combine(oscillating->f, oscillating->g);
    SpectralVector a = steady_part, b = steady_part;
    a.axpy(lo, shape);
    b.axpy(hi, shape);
    return std::max(l2_norm(a), l2_norm(b));
  }

 private:
  Grid grid_;
  std::vector<ForcingTerm> terms_;
};

// ---------------------------------------------------------------------------
// Variable changes

struct ElsasserPair {
  SpectralVector v;
  SpectralVector w;
};

struct PrimitivePair {
  SpectralVector u;
  SpectralVector b;
};

inline ElsasserPair to_elsasser(const SpectralVector& u, const SpectralVector& b, bool swapped) {
  if (!(u.grid() == b.grid())) throw GridMismatch();
  SpectralVector v = u + b;
  SpectralVector w = swapped ? b - u : u - b;
  return {std::move(v), std::move(w)};
}

inline PrimitivePair from_elsasser(const SpectralVector& v, const SpectralVector& w, bool swapped) {
  if (!(v.grid() == w.grid())) throw GridMismatch();
  SpectralVector sum = v + w, diff = v - w;
  sum *= 0.5;
  diff *= 0.5;
  if (swapped) return {std::move(diff), std::move(sum)};
  return {std::move(sum), std::move(diff)};
}

// Elsasser forcing (f, g) from velocity and induction forcing (f1, g1).
inline ForcePair elsasser_forcing(const SpectralVector& f1, const SpectralVector& g1, bool swapped) {
  auto [f, g] = to_elsasser(f1, g1, swapped);
  return {std::move(f), std::move(g)};
}

struct Nondimensionalized {
  ElsasserParams params;
  ForcingSpec forcing;
  double velocity_forcing_scale;  // multiplies dimensional f1
  double magnetic_forcing_scale;  // multiplies dimensional g1
};

// f1 and g1 hold dimensional forcing values sampled on the rescaled unit
// grid (x' = x / L). The magnetic field is measured in Alfven units
// b / sqrt(rho0 mu0) before scaling by U^2 / L.
inline Nondimensionalized nondimensionalize(const DimensionalParams& p, const SpectralVector& f1,
                                            const SpectralVector& g1) {
  for (double x : {p.nu, p.lambda, p.rho0, p.mu0, p.L, p.U})
    if (!(x > 0.0)) throw Error("dimensional parameters must be positive");
  const double Re = p.U * p.L / p.nu;
  const double Rm = p.U * p.L / p.lambda;
  const auto params = derive_elsasser_params(Re, Rm);
  const double sf = p.L / (p.U * p.U);
  const double sg = sf / std::sqrt(p.rho0 * p.mu0);
  const auto fg = elsasser_forcing(sf * f1, sg * g1, params.swapped);
  return {params, ForcingSpec::steady(fg.f, fg.g), sf, sg};
}

// Grashof number in Elsasser form:
//   G = max(Re^2, Rm^2) / pi^2 * limsup max(||f + g||, ||f - g||).
inline double grashof_number(const ForcingSpec& forcing, const ElsasserParams& params) {
  if (forcing.empty()) return 0.0;
  const double plus = forcing.limsup_norm([](const SpectralVector& f, const SpectralVector& g) { return f + g; });
  const double minus = forcing.limsup_norm([](const SpectralVector& f, const SpectralVector& g) { return f - g; });
  const double re2 = std::max(params.Re * params.Re, params.Rm * params.Rm);
  return re2 / (pi * pi) * std::max(plus, minus);
}

// Dimensional Grashof number from the L2([0,L]^2) norms of f1 and g1:
//   G = 8/lambda_1 max(1/nu^2, 1/lambda^2) max(||f1||, ||g1|| / sqrt(rho0 mu0)),
// lambda_1 = 4 pi^2 / L^2.
inline double dimensional_grashof(const DimensionalParams& p, double f1_norm, double g1_norm) {
  const double lambda1 = 4.0 * pi * pi / (p.L * p.L);
  const double inv = std::max(1.0 / (p.nu * p.nu), 1.0 / (p.lambda * p.lambda));
  return 8.0 / lambda1 * inv * std::max(f1_norm, g1_norm / std::sqrt(p.rho0 * p.mu0));
}

// ---------------------------------------------------------------------------
// State and right-hand side

struct ElsasserState {
  SpectralVector v;
  SpectralVector w;
  double t = 0.0;

  explicit ElsasserState(Grid g) : v(zero_vector(g)), w(zero_vector(g)) {}
  ElsasserState(SpectralVector v_, SpectralVector w_, double t_ = 0.0)
      : v(std::move(v_)), w(std::move(w_)), t(t_) {
    if (!(v.grid() == w.grid())) throw GridMismatch();
  }
  const Grid& grid() const { return v.grid(); }
};

class CflViolation : public Error {
 public:
  CflViolation(double dt, double admissible)
      : Error("time step " + format_double(dt) + " violates CFL; admissible dt <= " + format_double(admissible)),
        dt_(dt),
        admissible_(admissible) {}
  double dt() const { return dt_; }
  double admissible() const { return admissible_; }

 private:
  double dt_, admissible_;
};

inline constexpr double cfl_safety = 0.5;

struct ExplicitTerms {
  SpectralVector v;
  SpectralVector w;
  double max_speed = 0.0;
};

// Advection and forcing, projected and dealiased.
inline ExplicitTerms explicit_terms(const ElsasserState& s, const ElsasserParams& p, const ForcePair& force) {
  const auto pv = to_physical(s.v);
  const auto pw = to_physical(s.w);
  SpectralVector adv_v = advect(pw, s.v);
  SpectralVector adv_w = advect(pv, s.w);
  SpectralVector rv = p.advection_sign_v() * adv_v;
  rv += dealias(force.f);
  SpectralVector rw = -1.0 * adv_w;
  rw += dealias(force.g);
  return {leray_project(rv), leray_project(rw), std::max(max_speed(pv), max_speed(pw))};
}

inline double admissible_dt(const Grid& g, double speed) {
  return speed > 0.0 ? cfl_safety * g.spacing() / speed : std::numeric_limits<double>::infinity();
}

// Full right-hand side (dv/dt, dw/dt) including diffusion.
inline ElsasserPair mhd_rhs(const ElsasserState& s, const ElsasserParams& p, const ForcingSpec& forcing, double t) {
  const auto e = explicit_terms(s, p, forcing.at(t));
  SpectralVector dv = e.v, dw = e.w;
  const auto lv = laplacian(s.v), lw = laplacian(s.w);
  dv.axpy(p.alpha, lv).axpy(p.beta, lw);
  dw.axpy(p.alpha, lw).axpy(p.beta, lv);
  dv.divergence_free = dw.divergence_free = true;
  return {std::move(dv), std::move(dw)};
}

namespace detail {

// Extra implicit damping acting on the (v, w) amplitude pair of one mode.
struct PairDamping {
  double vv = 0.0, vw = 0.0, wv = 0.0, ww = 0.0;
};

struct NoDamping {
  PairDamping operator()(int, int) const { return {}; }
};

// Crank-Nicolson in the linear part L(k) = -|2 pi k|^2 [[a, b], [b, a]] - M(k):
//   (I - dt/2 L) x' = (I + dt/2 L) x + dt r.
// Modes outside the dealiasing cutoff, the mean and Nyquist rows are zeroed.
template <class Damping>
ElsasserPair crank_nicolson(const ElsasserParams& p, double dt, const SpectralVector& v, const SpectralVector& w,
                            const SpectralVector& rv, const SpectralVector& rw, Damping&& damping) {
  const Grid& g = v.grid();
  SpectralVector vo(g), wo(g);
  const int kc = g.cutoff();
  for (int i = 0; i < g.n(); ++i)
    for (int j = 0; j < g.columns(); ++j) {
      if ((i == 0 && j == 0) || g.nyquist(i, j) || g.k_max_norm(i, j) > kc) continue;
      const double kk = 4.0 * pi * pi * g.k_squared(i, j);
      const PairDamping m = damping(i, j);
      const double l11 = -kk * p.alpha - m.vv, l12 = -kk * p.beta - m.vw;
      const double l21 = -kk * p.beta - m.wv, l22 = -kk * p.alpha - m.ww;
      const double h = 0.5 * dt;
      const double a11 = 1.0 - h * l11, a12 = -h * l12, a21 = -h * l21, a22 = 1.0 - h * l22;
      const double det = a11 * a22 - a12 * a21;
      for (int c = 0; c < 2; ++c) {
        const cplx x1 = v[c].at(i, j), x2 = w[c].at(i, j);
        const cplx y1 = x1 + h * (l11 * x1 + l12 * x2) + dt * rv[c].at(i, j);
        const cplx y2 = x2 + h * (l21 * x1 + l22 * x2) + dt * rw[c].at(i, j);
        vo[c].at(i, j) = (a22 * y1 - a12 * y2) / det;
        wo[c].at(i, j) = (a11 * y2 - a21 * y1) / det;
      }
    }
  vo.divergence_free = wo.divergence_free = true;
  return {std::move(vo), std::move(wo)};
}

// Adams-Bashforth 2 combination (forward Euler when there is no history).
inline SpectralVector ab2(const SpectralVector& now, const std::optional<SpectralVector>& prev) {
  if (!prev) return now;
  SpectralVector out = 1.5 * now;
  out.axpy(-0.5, *prev);
  return out;
}

}  // namespace detail

// IMEX integrator for the reference system: Crank-Nicolson on the coupled
// diffusion block, Adams-Bashforth 2 on advection and forcing, one forward
// Euler step to start the multistep history.
class MhdIntegrator {
 public:
  MhdIntegrator(ElsasserParams params, ForcingSpec forcing) : params_(params), forcing_(std::move(forcing)) {}

  const ElsasserParams& params() const { return params_; }
  const ForcingSpec& forcing() const { return forcing_; }
  void reset_history() { prev_.reset(); }
  bool has_history() const { return prev_.has_value(); }

  ElsasserState step(const ElsasserState& s, double dt) {
    if (!(dt > 0.0)) throw Error("time step must be positive");
    auto e = explicit_terms(s, params_, forcing_.at(s.t));
    const double adm = admissible_dt(s.grid(), e.max_speed);
    if (dt > adm) throw CflViolation(dt, adm);
    if (prev_ && prev_->dt != dt) prev_.reset();
    const auto rv = detail::ab2(e.v, prev_ ? std::optional(prev_->v) : std::nullopt);
    const auto rw = detail::ab2(e.w, prev_ ? std::optional(prev_->w) : std::nullopt);
    auto next = detail::crank_nicolson(params_, dt, s.v, s.w, rv, rw, detail::NoDamping{});
    prev_ = History{std::move(e.v), std::move(e.w), dt};
    last_speed_ = e.max_speed;
    return ElsasserState(std::move(next.v), std::move(next.w), s.t + dt);
  }

  double last_max_speed() const { return last_speed_; }

 private:
  struct History {
    SpectralVector v, w;
    double dt;
  };
  ElsasserParams params_;
  ForcingSpec forcing_;
  std::optional<History> prev_;
  double last_speed_ = 0.0;
};

// One step from a cold start (explicit part by forward Euler).
inline ElsasserState imex_step(const ElsasserState& s, const ElsasserParams& p, const ForcingSpec& forcing, double dt) {
  MhdIntegrator integ(p, forcing);
  return integ.step(s, dt);
}

// ---------------------------------------------------------------------------
// Energy budget: d/dt(|v|^2+|w|^2) + (a-b)(|grad v|^2+|grad w|^2)
//                 <= (|f|^2+|g|^2) / (4 pi^2 (a-b))

struct EnergySample {
  double t;
  double energy;     // |v|^2 + |w|^2
  double enstrophy;  // |grad v|^2 + |grad w|^2
  double forcing;    // |f|^2 + |g|^2
};

inline EnergySample energy_sample(const ElsasserState& s, const ForcingSpec& forcing) {
  const auto fp = forcing.at(s.t);
  return {s.t, l2_norm_sq(s.v) + l2_norm_sq(s.w), h1_seminorm_sq(s.v) + h1_seminorm_sq(s.w),
          l2_norm_sq(fp.f) + l2_norm_sq(fp.g)};
}

// Discrete residual of the budget over [t_k, t_{k+1}], trapezoidal in the
// dissipation and forcing terms.
inline double budget_residual(const EnergySample& a, const EnergySample& b, const ElsasserParams& p) {
  const double dt = b.t - a.t;
  const double gap = p.gap();
  return (b.energy - a.energy) / dt + gap * 0.5 * (a.enstrophy + b.enstrophy) -
         0.5 * (a.forcing + b.forcing) / (4.0 * pi * pi * gap);
}

inline double budget_tolerance(double forcing_sq) { return 1e-6 * std::max(1.0, forcing_sq); }

struct BudgetReport {
  std::vector<double> residuals;
  double max_residual = -std::numeric_limits<double>::infinity();
  std::size_t violations = 0;
  bool passed() const { return violations == 0; }
};

inline BudgetReport energy_budget(const std::vector<EnergySample>& traj, const ElsasserParams& p) {
  if (traj.size() < 3) throw Error("energy budget needs at least 3 samples");
  const double dt0 = traj[1].t - traj[0].t;
  BudgetReport rep;
  for (std::size_t k = 0; k + 1 < traj.size(); ++k) {
    const double dt = traj[k + 1].t - traj[k].t;
    if (std::abs(dt - dt0) > 1e-9 * std::abs(dt0)) throw Error("energy budget needs uniform sampling");
    const double r = budget_residual(traj[k], traj[k + 1], p);
    rep.residuals.push_back(r);
    rep.max_residual = std::max(rep.max_residual, r);
    if (r > budget_tolerance(std::max(traj[k].forcing, traj[k + 1].forcing))) ++rep.violations;
  }
  return rep;
}

// ---------------------------------------------------------------------------
// Spin-up: integrate until the windowed mean of |grad v|^2 + |grad w|^2 over
// windows of length 1/(pi^2 (a-b)) changes by less than `tolerance`.

struct SpinUpPolicy {
  double tolerance = 0.01;
  double max_time = 200.0;
  int min_windows = 2;
};

struct SpinUpReport {
  double time = 0.0;
  int windows = 0;
  bool settled = false;
  double last_window_mean = 0.0;
};

inline SpinUpReport spin_up(ElsasserState& s, MhdIntegrator& integ, double dt, const SpinUpPolicy& policy) {
  const double window = 1.0 / (pi * pi * integ.params().gap());
  const long steps_per_window = std::max(1L, std::lround(window / dt));
  SpinUpReport rep;
  std::optional<double> previous;
  double z_prev = h1_seminorm_sq(s.v) + h1_seminorm_sq(s.w);
  const double t_start = s.t;
  while (s.t - t_start < policy.max_time) {
    double acc = 0.0;
    for (long k = 0; k < steps_per_window; ++k) {
      s = integ.step(s, dt);
      const double z = h1_seminorm_sq(s.v) + h1_seminorm_sq(s.w);
      acc += 0.5 * (z + z_prev) * dt;
      z_prev = z;
    }
    const double mean = acc / (steps_per_window * dt);
    ++rep.windows;
    rep.last_window_mean = mean;
    if (previous && rep.windows >= policy.min_windows &&
        std::abs(mean - *previous) <= policy.tolerance * std::max(*previous, 1e-300)) {
      rep.settled = true;
      break;
    }
    previous = mean;
  }
  rep.time = s.t - t_start;
  s.t = 0.0;
  return rep;
}

}  // namespace mhdnudge
