#pragma once

// Error metrics, exponential-rate fits, parameter-threshold calculators and
// runtime checks of the a-priori bounds.

#include <mhdnudge/mhd.hpp>

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace mhdnudge {

// ---------------------------------------------------------------------------
// Error series

struct ErrorSample {
  double t;
  double l2_eta, l2_zeta, h1_eta, h1_zeta;

  double l2() const { return std::hypot(l2_eta, l2_zeta); }
  double h1() const { return std::hypot(h1_eta, h1_zeta); }
};

inline ErrorSample error_norms(const ElsasserState& reference, const ElsasserState& assimilated) {
  if (!(reference.grid() == assimilated.grid())) throw GridMismatch();
  if (std::abs(reference.t - assimilated.t) > 1e-12 * std::max(1.0, std::abs(reference.t)))
    throw Error("clock mismatch: reference at t=" + format_double(reference.t) + ", assimilated at t=" +
                format_double(assimilated.t));
  const SpectralVector eta = reference.v - assimilated.v;
  const SpectralVector zeta = reference.w - assimilated.w;
  return {reference.t, l2_norm(eta), l2_norm(zeta), h1_seminorm(eta), h1_seminorm(zeta)};
}

struct FitResult {
  double rate = 0.0;  // -slope of ln(norm) against t
  double r2 = 0.0;
  double intercept = 0.0;
  std::size_t samples = 0;
};

struct ErrorSeries {
  std::vector<double> times;
  std::vector<double> l2_eta, l2_zeta, h1_eta, h1_zeta;
  std::optional<FitResult> l2_fit, h1_fit;

  void append(const ErrorSample& s) {
    if (!times.empty() && !(s.t > times.back())) throw Error("error series times must be strictly increasing");
    times.push_back(s.t);
    l2_eta.push_back(s.l2_eta);
    l2_zeta.push_back(s.l2_zeta);
    h1_eta.push_back(s.h1_eta);
    h1_zeta.push_back(s.h1_zeta);
  }
  std::size_t size() const { return times.size(); }
  std::vector<double> l2() const { return combine(l2_eta, l2_zeta); }
  std::vector<double> h1() const { return combine(h1_eta, h1_zeta); }

 private:
  static std::vector<double> combine(const std::vector<double>& a, const std::vector<double>& b) {
    std::vector<double> out(a.size());
    for (std::size_t k = 0; k < a.size(); ++k) out[k] = std::hypot(a[k], b[k]);
    return out;
  }
};

inline constexpr double fit_floor = 1e-14;

// Least-squares line through (t, ln max(y, floor)) over the last
// `tail_fraction` of the samples.
inline FitResult fit_exponential_rate(std::span<const double> t, std::span<const double> y, double tail_fraction = 0.5) {
  if (t.size() != y.size()) throw Error("fit: times and values differ in length");
  if (!(tail_fraction > 0.0) || tail_fraction > 1.0) throw Error("fit: tail fraction must lie in (0, 1]");
  const std::size_t count = static_cast<std::size_t>(std::floor(tail_fraction * t.size()));
  if (count < 10) throw Error("fit: degenerate window (" + std::to_string(count) + " samples, need 10)");
  const std::size_t first = t.size() - count;
  double st = 0, sy = 0;
  for (std::size_t k = first; k < t.size(); ++k) {
    st += t[k];
    sy += std::log(std::max(y[k], fit_floor));
  }
  const double mt = st / count, my = sy / count;
  double stt = 0, sty = 0, syy = 0;
  for (std::size_t k = first; k < t.size(); ++k) {
    const double dt = t[k] - mt, dy = std::log(std::max(y[k], fit_floor)) - my;
    stt += dt * dt;
    sty += dt * dy;
    syy += dy * dy;
  }
  if (!(stt > 0.0)) throw Error("fit: degenerate window (no spread in t)");
  const double slope = sty / stt;
  FitResult r;
  r.rate = -slope;
  r.intercept = my - slope * mt;
  r.samples = count;
  r.r2 = syy > 0.0 ? (sty * sty) / (stt * syy) : 1.0;
  return r;
}

// Convergence verdict for one norm series: the series is cut where it first
// reaches the round-off floor `floor_rel * y0`, and the tail half of the
// remainder is fitted.
struct ConvergenceVerdict {
  double initial = 0.0;
  double terminal = 0.0;
  double orders = 0.0;  // log10(initial / terminal)
  FitResult fit;
  double floor_time = std::numeric_limits<double>::infinity();
  bool success = false;
};

struct ConvergenceCriteria {
  double min_orders = 6.0;
  double min_r2 = 0.98;
  double floor_rel = 1e-12;
};

inline ConvergenceVerdict evaluate_convergence(std::span<const double> t, std::span<const double> y,
                                               const ConvergenceCriteria& crit = {}) {
  if (t.size() != y.size() || t.empty()) throw Error("convergence: empty or mismatched series");
  ConvergenceVerdict v;
  v.initial = y.front();
  v.terminal = y.back();
  v.orders = v.initial > 0.0 ? std::log10(v.initial / std::max(v.terminal, 1e-300)) : 0.0;
  std::size_t end = t.size();
  for (std::size_t k = 0; k < t.size(); ++k)
    if (y[k] <= crit.floor_rel * v.initial) {
      end = k + 1;
      v.floor_time = t[k];
      break;
    }
  try {
    v.fit = fit_exponential_rate(t.subspan(0, end), y.subspan(0, end), 0.5);
  } catch (const Error&) {
    return v;
  }
  v.success = v.fit.rate > 0.0 && v.fit.r2 >= crit.min_r2 && v.orders >= crit.min_orders;
  return v;
}

// First sample time after which the local log-slope stays within
// `tolerance` (relative) of `rate` until the series hits the floor.
inline double onset_time(std::span<const double> t, std::span<const double> y, double rate, double floor_time,
                         double tolerance = 0.1) {
  std::size_t end = t.size();
  for (std::size_t k = 0; k < t.size(); ++k)
    if (t[k] >= floor_time) {
      end = k;
      break;
    }
  if (end < 2) return t.empty() ? 0.0 : t.front();
  std::size_t onset = end - 1;
  for (std::size_t k = end - 1; k-- > 0;) {
    const double local = -(std::log(std::max(y[k + 1], fit_floor)) - std::log(std::max(y[k], fit_floor))) /
                         (t[k + 1] - t[k]);
    if (std::abs(local - rate) > tolerance * std::abs(rate)) break;
    onset = k;
  }
  return t[onset];
}

// Tail-half trend: negative fitted slope and the last value below the first
// value of the tail.
inline bool decreasing_trend(std::span<const double> t, std::span<const double> y) {
  if (t.size() < 20) throw Error("trend test needs at least 20 samples");
  const auto fit = fit_exponential_rate(t, y, 0.5);
  const std::size_t first = t.size() - fit.samples;
  return fit.rate > 0.0 && y.back() < y[first];
}

// ---------------------------------------------------------------------------
// Analysis constants and theorem thresholds

struct Constant {
  double value;
  std::string provenance;  // "default", "derived", "configured", "empirical"
};

using ConstantsLedger = std::map<std::string, Constant>;

inline double require(const ConstantsLedger& c, const std::string& key) {
  auto it = c.find(key);
  if (it == c.end()) throw Error("missing constant '" + key + "'");
  return it->second.value;
}

// Fills the constants defined in terms of the primary ones, unless they were
// configured explicitly.
inline ConstantsLedger complete_constants(ConstantsLedger c, const ElsasserParams& p) {
  const double cL = require(c, "c_L"), cB = require(c, "c_B"), cT = require(c, "c_T"), cM = require(c, "c_M");
  if (!c.count("c")) c["c"] = {std::max(cL / 4.0, 1.5 * cB), "derived"};
  if (!c.count("C")) c["C"] = {81.0 / 4.0 * std::pow(cL, 8), "derived"};
  const double cc = c["c"].value;
  const double a = p.gap();
  if (!c.count("c_tilde_1st"))
    c["c_tilde_1st"] = {1.0 + std::log(16.0 * cc * cc * cM / (pi * pi * a * a)), "derived"};
  if (!c.count("c_tilde_T2"))
    c["c_tilde_T2"] = {std::log(250.0 * (cB + cT) * (cB + cT) * (20.0 * pi * pi + cM)) / 8.0, "derived"};
  return c;
}

// Defaults for the unquantified analysis constants. Interpolant constants
// (c1 or c2, c3) must be added by the caller.
inline ConstantsLedger default_constants(const ElsasserParams& p) {
  ConstantsLedger c;
  const double cL = 1.0 / std::sqrt(two_pi);
  c["c_L"] = {cL, "default"};
  c["c_B"] = {1.0, "default"};
  c["c_T"] = {1.0, "default"};
  c["c_M"] = {1.0, "default"};
  return complete_constants(std::move(c), p);
}

enum class TheoremId { ThmAll, Thm1st, ThmV, ThmH1All, ThmH11st, ThmH1V, T2Thm1 };

inline std::string_view to_string(TheoremId id) {
  switch (id) {
    case TheoremId::ThmAll: return "ThmAll";
    case TheoremId::Thm1st: return "Thm1st";
    case TheoremId::ThmV: return "ThmV";
    case TheoremId::ThmH1All: return "ThmH1All";
    case TheoremId::ThmH11st: return "ThmH11st";
    case TheoremId::ThmH1V: return "ThmH1V";
    case TheoremId::T2Thm1: return "T2Thm1";
  }
  return "?";
}

inline TheoremId parse_theorem_id(std::string_view s) {
  for (auto id : {TheoremId::ThmAll, TheoremId::Thm1st, TheoremId::ThmV, TheoremId::ThmH1All, TheoremId::ThmH11st,
                  TheoremId::ThmH1V, TheoremId::T2Thm1})
    if (to_string(id) == s) return id;
  throw Error("unknown theorem id '" + std::string(s) + "'");
}

inline bool is_h1_variant(TheoremId id) {
  return id == TheoremId::ThmH1All || id == TheoremId::ThmH11st || id == TheoremId::ThmH1V;
}

struct TheoremThresholds {
  TheoremId theorem_id;
  double G;
  double mu_min;
  double mu;  // the gain at which h_max is evaluated
  double h_max;
  ConstantsLedger constants_used;
};

namespace detail {

inline void record(ConstantsLedger& used, const ConstantsLedger& all, std::initializer_list<const char*> keys) {
  for (const char* k : keys) used[k] = all.at(k);
}

}  // namespace detail

// Smallest gain allowed by the theorem's hypothesis (strict inequality).
inline double threshold_mu(TheoremId id, double G, const ElsasserParams& p, const ConstantsLedger& c,
                           ConstantsLedger* used = nullptr) {
  if (!(G >= 0.0)) throw Error("Grashof number must be nonnegative");
  const double a = p.gap();
  ConstantsLedger rec;
  double mu = 0.0;
  switch (id) {
    case TheoremId::ThmAll:
    case TheoremId::ThmH1All: {
      const double cL = require(c, "c_L");
      detail::record(rec, c, {"c_L"});
      mu = pi * pi * (std::pow(cL, 4) + std::pow(a, 4)) * G * G / a;
      break;
    }
    case TheoremId::Thm1st:
    case TheoremId::ThmH11st: {
      const double cc = require(c, "c"), ct = require(c, "c_tilde_1st"), C = require(c, "C");
      detail::record(rec, c, {"c", "c_tilde_1st", "C"});
      if (G > 0.0) {
        const double bracket = std::max(0.0, ct + 2.0 * std::log(G) + C * std::pow(G, 4));
        mu = 32.0 * pi * pi * cc * cc * a * bracket * G * G;
      }
      break;
    }
    case TheoremId::ThmV:
    case TheoremId::ThmH1V: {
      const double cL = require(c, "c_L");
      detail::record(rec, c, {"c_L"});
      const double q = 4.0 + a * a * G * G;
      mu = pi * pi * std::pow(cL, 4) * G * G * q * q / (16.0 * a);
      break;
    }
    case TheoremId::T2Thm1: {
      const double cB = require(c, "c_B"), cT = require(c, "c_T"), cM = require(c, "c_M");
      const double ct = require(c, "c_tilde_T2"), C = require(c, "C");
      detail::record(rec, c, {"c_B", "c_T", "c_M", "c_tilde_T2", "C"});
      const double g4 = C * std::pow(G, 4);
      mu = 2000.0 * (cB + cT) * (cB + cT) * (20.0 * pi * pi + cM) * G * G * std::pow(1.0 + G * G, 3) *
           std::exp(2.0 * g4) * (ct + std::log1p(G) + g4);
      break;
    }
  }
  if (used) used->insert(rec.begin(), rec.end());
  return mu;
}

// Largest admissible observation resolution at gain mu.
inline double threshold_h(TheoremId id, double mu, const ElsasserParams& p, const ConstantsLedger& c,
                          ConstantsLedger* used = nullptr) {
  if (!(mu >= 0.0)) throw Error("gain must be nonnegative");
  if (mu == 0.0) return std::numeric_limits<double>::infinity();
  const double a = p.gap();
  ConstantsLedger rec;
  double h;
  if (id == TheoremId::T2Thm1) {
    const double c2 = require(c, "c2"), c3 = require(c, "c3");
    detail::record(rec, c, {"c2", "c3"});
    h = std::sqrt(a / (2.0 * mu * std::max(c2 * c2, c3)));
  } else {
    const double c1 = require(c, "c1");
    detail::record(rec, c, {"c1"});
    h = std::sqrt(a / mu) / c1;
    if (is_h1_variant(id)) h /= 2.0 * std::sqrt(2.0);
  }
  if (used) used->insert(rec.begin(), rec.end());
  return h;
}

// mu_min from the theorem, h_max at mu = mu_min (1 + margin).
inline TheoremThresholds theorem_thresholds(TheoremId id, double G, const ElsasserParams& p, const ConstantsLedger& c,
                                            double margin = 0.1) {
  TheoremThresholds t{id, G, 0.0, 0.0, 0.0, {}};
  t.mu_min = threshold_mu(id, G, p, c, &t.constants_used);
  t.mu = t.mu_min * (1.0 + margin);
  t.h_max = threshold_h(id, t.mu, p, c, &t.constants_used);
  return t;
}

// ---------------------------------------------------------------------------
// Windowed checks

namespace detail {

// Trapezoidal integral of the sampled series over [a, b], linear
// interpolation at the ends. Counts the samples that fall inside.
inline double integrate(std::span<const double> t, std::span<const double> y, double a, double b,
                        std::size_t* inside = nullptr) {
  auto value_at = [&](double x) {
    auto it = std::upper_bound(t.begin(), t.end(), x);
    if (it == t.begin()) return y.front();
    if (it == t.end()) return y.back();
    const std::size_t k = static_cast<std::size_t>(it - t.begin());
    const double s = (x - t[k - 1]) / (t[k] - t[k - 1]);
    return (1 - s) * y[k - 1] + s * y[k];
  };
  double acc = 0.0, prev_t = a, prev_y = value_at(a);
  std::size_t count = 0;
  for (std::size_t k = 0; k < t.size(); ++k) {
    if (t[k] <= a) continue;
    if (t[k] >= b) break;
    acc += 0.5 * (prev_y + y[k]) * (t[k] - prev_t);
    prev_t = t[k];
    prev_y = y[k];
    ++count;
  }
  acc += 0.5 * (prev_y + value_at(b)) * (b - prev_t);
  if (inside) *inside = count + 1;
  return acc;
}

// Window starts at every sample with t_k + T inside the series.
template <class Visit>
void for_each_window(std::span<const double> t, double T, Visit&& visit) {
  for (std::size_t k = 0; k < t.size(); ++k) {
    if (t[k] + T > t.back() * (1 + 1e-12) + 1e-300) break;
    visit(t[k]);
  }
}

}  // namespace detail

struct GronwallReport {
  double min_window_average;       // proxy for liminf of the average of psi
  double max_negative_average;     // proxy for limsup of the average of psi^-
  bool conditions_hold;
  std::size_t windows;
};

inline GronwallReport gronwall_condition_check(std::span<const double> t, std::span<const double> psi, double T) {
  if (t.size() != psi.size() || t.size() < 2) throw Error("gronwall check: bad series");
  if (!(T > 0.0)) throw Error("gronwall check: window length must be positive");
  if (t.back() - t.front() < 3.0 * T) throw Error("gronwall check: run shorter than 3T");
  std::vector<double> neg(psi.size());
  double scale = 0.0;
  for (std::size_t k = 0; k < psi.size(); ++k) {
    neg[k] = std::max(0.0, -psi[k]);
    scale = std::max(scale, std::abs(psi[k]));
  }
  GronwallReport r{std::numeric_limits<double>::infinity(), 0.0, false, 0};
  detail::for_each_window(t, T, [&](double a) {
    r.min_window_average = std::min(r.min_window_average, detail::integrate(t, psi, a, a + T) / T);
    r.max_negative_average = std::max(r.max_negative_average, detail::integrate(t, neg, a, a + T) / T);
    ++r.windows;
  });
  r.conditions_hold = r.min_window_average > 1e-9 * scale && std::isfinite(r.max_negative_average);
  return r;
}

struct IntBoundReport {
  double bound;
  double worst_integral;
  double worst_margin;  // bound - worst integral
  std::size_t windows;
  bool passed;
};

inline constexpr double int_bound_floor = 1e-10;

// Checks int_t^{t+T} (|grad v|^2 + |grad w|^2) <= (1 + T pi^2 (a-b)) (a-b) G^2
// for every window start.
inline IntBoundReport check_int_bound(std::span<const double> t, std::span<const double> enstrophy, double G,
                                      const ElsasserParams& p, std::optional<double> window = std::nullopt) {
  if (t.size() != enstrophy.size() || t.size() < 2) throw Error("int bound: bad series");
  const double a = p.gap();
  const double T = window.value_or(1.0 / (pi * pi * a));
  IntBoundReport r{(1.0 + T * pi * pi * a) * a * G * G, 0.0, std::numeric_limits<double>::infinity(), 0, false};
  detail::for_each_window(t, T, [&](double s) {
    std::size_t inside = 0;
    const double I = detail::integrate(t, enstrophy, s, s + T, &inside);
    if (inside < 8)
      throw Error("int bound: window at t=" + format_double(s) + " has " + std::to_string(inside) +
                  " samples, need 8");
    r.worst_integral = std::max(r.worst_integral, I);
    r.worst_margin = std::min(r.worst_margin, r.bound - I);
    ++r.windows;
  });
  if (r.windows == 0) throw Error("int bound: series shorter than one window");
  r.passed = r.worst_margin >= -int_bound_floor;
  return r;
}

}  // namespace mhdnudge
