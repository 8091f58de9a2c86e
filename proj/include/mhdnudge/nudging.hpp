#pragma once

// Nudged (data-assimilating) Elsasser system co-evolved with the reference:
//   dv~/dt = ... + mu P I_h(v + eps1 - v~)   (observed part per mask)
//   dw~/dt = ... + mu P I_h(w + eps2 - w~)
// with optional forcing perturbations delta added to the assimilated system.

#include <mhdnudge/diagnostics.hpp>
#include <mhdnudge/observation.hpp>

#include <cmath>
#include <optional>

namespace mhdnudge {

// Observation perturbation eps(t) = envelope(t) * field.
struct Perturbation {
  SpectralVector field;
  Modulation envelope;

  SpectralVector at(double t) const { return envelope(t) * field; }
};

struct NudgingConfig {
  double mu = 0.0;
  InterpolantSpec interpolant;
  ObservationMask mask = ObservationMask::All;
  std::optional<ForcingSpec> delta;  // (delta1, delta2) in Elsasser form
  std::optional<Perturbation> eps1;
  std::optional<Perturbation> eps2;
};

inline void validate(const NudgingConfig& c, const Grid& g) {
  if (!(c.mu >= 0.0) || !std::isfinite(c.mu)) throw Error("nudging gain mu must be finite and >= 0");
  check_compatible(c.interpolant, g);
  for (const auto* e : {&c.eps1, &c.eps2})
    if (*e && (std::abs((*e)->field[0].at(0, 0)) > 0.0 || std::abs((*e)->field[1].at(0, 0)) > 0.0))
      throw Error("observation perturbations must be mean-zero");
  if (c.delta)
    for (const auto& term : c.delta->terms())
      for (const auto* f : {&term.f, &term.g})
        if (std::abs((*f)[0].at(0, 0)) > 0.0 || std::abs((*f)[1].at(0, 0)) > 0.0)
          throw Error("forcing perturbations must be mean-zero");
}

struct AssimilationPair {
  ElsasserState reference;
  ElsasserState assimilated;

  double t() const { return reference.t; }
};

enum class InitMode { Zero, CopyReference, Custom };

inline AssimilationPair init_assimilation(const ElsasserState& reference, InitMode mode = InitMode::Zero,
                                          const std::optional<ElsasserState>& custom = std::nullopt) {
  switch (mode) {
    case InitMode::Zero: {
      ElsasserState z(reference.grid());
      z.t = reference.t;
      return {reference, std::move(z)};
    }
    case InitMode::CopyReference: return {reference, reference};
    case InitMode::Custom: {
      if (!custom) throw Error("custom initialization requested without a field");
      if (!(custom->grid() == reference.grid())) throw GridMismatch();
      if (!is_divergence_free(custom->v, 1e-10) || !is_divergence_free(custom->w, 1e-10))
        throw Error("custom initialization must be divergence-free");
      ElsasserState s = *custom;
      s.t = reference.t;
      return {reference, std::move(s)};
    }
  }
  throw Error("unreachable init mode");
}

namespace detail {

inline void require_same_clock(const AssimilationPair& p) {
  if (std::abs(p.reference.t - p.assimilated.t) > 1e-12 * std::max(1.0, std::abs(p.reference.t)))
    throw Error("clock mismatch between reference and assimilated states");
}

// mu P apply_masked(I_h, (dv, dw)).
inline ElsasserPair projected_feedback(const NudgingConfig& c, bool swapped, const SpectralVector& dv,
                                       const SpectralVector& dw) {
  const Grid& g = dv.grid();
  if (c.mu == 0.0) return {zero_vector(g), zero_vector(g)};
  auto fb = apply_masked(c.interpolant, c.mask, dv, dw, swapped);
  SpectralVector fv = leray_project(fb.v), fw = leray_project(fb.w);
  fv *= c.mu;
  fw *= c.mu;
  return {std::move(fv), std::move(fw)};
}

inline SpectralVector observed(const SpectralVector& x, const std::optional<Perturbation>& eps, double t) {
  if (!eps) return x;
  return x + eps->at(t);
}

}  // namespace detail

inline ElsasserPair nudging_term(const NudgingConfig& c, const ElsasserParams& p, const ElsasserState& reference,
                                 const ElsasserState& assimilated) {
  if (std::abs(reference.t - assimilated.t) > 1e-12 * std::max(1.0, std::abs(reference.t)))
    throw Error("clock mismatch between reference and assimilated states");
  const SpectralVector dv = detail::observed(reference.v, c.eps1, reference.t) - assimilated.v;
  const SpectralVector dw = detail::observed(reference.w, c.eps2, reference.t) - assimilated.w;
  return detail::projected_feedback(c, p.swapped, dv, dw);
}

class ExplicitNudgingUnstable : public Error {
 public:
  ExplicitNudgingUnstable(double dt, double admissible)
      : Error("explicit nudging needs mu*dt <= 1; dt " + format_double(dt) + " exceeds admissible dt " +
              format_double(admissible)),
        admissible_(admissible) {}
  double admissible() const { return admissible_; }

 private:
  double admissible_;
};

// Advances both systems with one shared dt. For spectral projections the
// self-damping part mu P I_h(-v~) sits in the Crank-Nicolson block and the
// observed part is averaged over the step, so the synchronized state is an
// exact fixed point; other interpolants are treated explicitly.
class CoupledStepper {
 public:
  CoupledStepper(ElsasserParams params, ForcingSpec forcing, NudgingConfig config)
      : reference_(params, forcing), params_(params), forcing_(std::move(forcing)), config_(std::move(config)) {
    validate(config_, forcing_.grid());
    if (config_.delta)
      for (const auto& term : config_.delta->terms()) forcing_.add(term);
  }

  const NudgingConfig& config() const { return config_; }
  const ElsasserParams& params() const { return params_; }
  MhdIntegrator& reference_integrator() { return reference_; }

  bool implicit() const { return config_.interpolant.kind == InterpolantKind::SpectralProjection; }

  void reset_history() {
    reference_.reset_history();
    prev_.reset();
  }

  AssimilationPair step(const AssimilationPair& pair, double dt) {
    detail::require_same_clock(pair);
    const double t0 = pair.t();
    const auto& a = pair.assimilated;
    auto e = explicit_terms(a, params_, forcing_.at(t0));
    const double adm = admissible_dt(a.grid(), e.max_speed);
    if (dt > adm) throw CflViolation(dt, adm);
    if (!implicit() && config_.mu * dt > 1.0) throw ExplicitNudgingUnstable(dt, 1.0 / config_.mu);

    ElsasserState ref_next = reference_.step(pair.reference, dt);
    if (prev_ && prev_->dt != dt) prev_.reset();

    if (!implicit()) {
      const auto n = nudging_term(config_, params_, pair.reference, a);
      e.v += n.v;
      e.w += n.w;
    }
    auto rv = detail::ab2(e.v, prev_ ? std::optional(prev_->v) : std::nullopt);
    auto rw = detail::ab2(e.w, prev_ ? std::optional(prev_->w) : std::nullopt);
    prev_ = History{std::move(e.v), std::move(e.w), dt};

    ElsasserPair next = [&] {
      if (!implicit() || config_.mu == 0.0)
        return detail::crank_nicolson(params_, dt, a.v, a.w, rv, rw, detail::NoDamping{});
      const auto o0 = observation(pair.reference, t0);
      const auto o1 = observation(ref_next, ref_next.t);
      rv.axpy(0.5, o0.v).axpy(0.5, o1.v);
      rw.axpy(0.5, o0.w).axpy(0.5, o1.w);
      const MaskCoupling cm = mask_coupling(config_.mask, params_.swapped);
      const Grid& g = a.grid();
      auto damping = [&](int i, int j) {
        const double s = config_.mu * spectral_feedback_factor(config_.interpolant, config_.mask, g, i, j);
        return detail::PairDamping{s * cm.vv, s * cm.vw, s * cm.wv, s * cm.ww};
      };
      return detail::crank_nicolson(params_, dt, a.v, a.w, rv, rw, damping);
    }();
    ElsasserState a_next(std::move(next.v), std::move(next.w), ref_next.t);
    return {std::move(ref_next), std::move(a_next)};
  }

 private:
  // mu P apply_masked(I_h, (v + eps1, w + eps2)) on the reference state.
  ElsasserPair observation(const ElsasserState& ref, double t) const {
    return detail::projected_feedback(config_, params_.swapped, detail::observed(ref.v, config_.eps1, t),
                                      detail::observed(ref.w, config_.eps2, t));
  }

  struct History {
    SpectralVector v, w;
    double dt;
  };
  MhdIntegrator reference_;
  ElsasserParams params_;
  ForcingSpec forcing_;  // assimilated system's forcing, including delta
  NudgingConfig config_;
  std::optional<History> prev_;
};

inline AssimilationPair coupled_step(CoupledStepper& stepper, const AssimilationPair& pair, double dt) {
  return stepper.step(pair, dt);
}

// ---------------------------------------------------------------------------
// Full assimilation run

class Instability : public Error {
 public:
  using Error::Error;
};

struct RunSpec {
  ElsasserParams params;
  ForcingSpec forcing;
  ElsasserState initial;  // reference initial condition, before spin-up
  double dt = 0.005;
  double horizon = 20.0;
  double sample_interval = 0.05;
  std::optional<SpinUpPolicy> spin_up;
  InitMode init_mode = InitMode::Zero;
  std::optional<ElsasserState> custom_init;
};

struct TrajectorySample {
  double t, l2_v, l2_w, h1_v, h1_w, energy_residual;
};

struct PrimitiveErrorSample {
  double t, l2_u, l2_b;
};

struct AssimilationResult {
  SpinUpReport spin_up;
  ErrorSeries errors;
  std::vector<TrajectorySample> trajectory;
  std::vector<PrimitiveErrorSample> primitive_errors;
  // Reference |grad v|^2 + |grad w|^2 at every step, for the windowed checks.
  std::vector<double> step_times;
  std::vector<double> step_enstrophy;
  BudgetReport budget;
  double max_budget_tolerance_ratio = -std::numeric_limits<double>::infinity();  // max residual / tolerance
  AssimilationPair final_state;
  long steps = 0;
};

inline AssimilationResult run_assimilation(const NudgingConfig& config, const RunSpec& spec) {
  if (!(spec.dt > 0.0) || !(spec.horizon > 0.0) || !(spec.sample_interval > 0.0))
    throw Error("dt, horizon and sample interval must be positive");
  ElsasserState ref = spec.initial;
  SpinUpReport spin;
  if (spec.spin_up) {
    MhdIntegrator integ(spec.params, spec.forcing);
    spin = spin_up(ref, integ, spec.dt, *spec.spin_up);
  } else {
    ref.t = 0.0;
  }

  CoupledStepper stepper(spec.params, spec.forcing, config);
  AssimilationPair pair = init_assimilation(ref, spec.init_mode, spec.custom_init);
  const long steps = std::lround(spec.horizon / spec.dt);
  const long every = std::max(1L, std::lround(spec.sample_interval / spec.dt));

  AssimilationResult res{spin, {}, {}, {}, {}, {}, {}, -std::numeric_limits<double>::infinity(), pair, steps};
  auto record = [&](double residual) {
    const auto& r = pair.reference;
    res.errors.append(error_norms(r, pair.assimilated));
    res.trajectory.push_back({r.t, l2_norm(r.v), l2_norm(r.w), h1_seminorm(r.v), h1_seminorm(r.w), residual});
    const auto pr = from_elsasser(r.v, r.w, spec.params.swapped);
    const auto pa = from_elsasser(pair.assimilated.v, pair.assimilated.w, spec.params.swapped);
    res.primitive_errors.push_back({r.t, l2_norm(pr.u - pa.u), l2_norm(pr.b - pa.b)});
    const auto& e = res.errors;
    const double last = e.l2_eta.back() + e.l2_zeta.back() + e.h1_eta.back() + e.h1_zeta.back();
    if (!std::isfinite(last))
      throw Instability("non-finite assimilated state at t=" + format_double(r.t) + " (mu=" +
                        format_double(config.mu) + ", h=" + format_double(config.interpolant.h) + ", dt=" +
                        format_double(spec.dt) + ")");
  };

  EnergySample prev = energy_sample(pair.reference, spec.forcing);
  res.step_times.push_back(prev.t);
  res.step_enstrophy.push_back(prev.enstrophy);
  record(0.0);
  double last_residual = 0.0;
  for (long k = 1; k <= steps; ++k) {
    pair = stepper.step(pair, spec.dt);
    const EnergySample cur = energy_sample(pair.reference, spec.forcing);
    if (!std::isfinite(cur.energy))
      throw Instability("non-finite reference state at step " + std::to_string(k) + ", t=" +
                        format_double(pair.t()) + " (dt=" + format_double(spec.dt) + ")");
    last_residual = budget_residual(prev, cur, spec.params);
    const double tol = budget_tolerance(std::max(prev.forcing, cur.forcing));
    res.budget.residuals.push_back(last_residual);
    res.budget.max_residual = std::max(res.budget.max_residual, last_residual);
    if (last_residual > tol) ++res.budget.violations;
    res.max_budget_tolerance_ratio = std::max(res.max_budget_tolerance_ratio, last_residual / tol);
    res.step_times.push_back(cur.t);
    res.step_enstrophy.push_back(cur.enstrophy);
    prev = cur;
    if (k % every == 0) record(last_residual);
  }
  res.final_state = pair;
  return res;
}

}  // namespace mhdnudge
