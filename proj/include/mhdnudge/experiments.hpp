#pragma once

// Configuration-driven experiment runner: scenario suites, the
// determining-interpolant experiment, parameter sweeps and run artifacts.
//
// Exit codes: 0 all checks pass, 1 I/O or other error, 2 invalid config,
// 3 numerical blow-up, 4 check failure.

#include <mhdnudge/nudging.hpp>

#include <json.hpp>
#include <yaml-cpp/yaml.h>

#include <atomic>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <mutex>
#include <set>
#include <sstream>
#include <thread>

namespace mhdnudge {

namespace exit_code {
inline constexpr int ok = 0;
inline constexpr int error = 1;
inline constexpr int invalid_config = 2;
inline constexpr int blow_up = 3;
inline constexpr int check_failed = 4;
}  // namespace exit_code

class ConfigError : public Error {
 public:
  using Error::Error;
};

enum class Scenario { Baseline, H1Track, Type2, GeneralizedDA, DeterminingInterpolant, BOnlyControl, UOnlyExploratory };

inline std::string_view to_string(Scenario s) {
  switch (s) {
    case Scenario::Baseline: return "Baseline";
    case Scenario::H1Track: return "H1Track";
    case Scenario::Type2: return "Type2";
    case Scenario::GeneralizedDA: return "GeneralizedDA";
    case Scenario::DeterminingInterpolant: return "DeterminingInterpolant";
    case Scenario::BOnlyControl: return "BOnlyControl";
    case Scenario::UOnlyExploratory: return "UOnlyExploratory";
  }
  return "?";
}

inline Scenario parse_scenario(std::string_view s) {
  for (auto x : {Scenario::Baseline, Scenario::H1Track, Scenario::Type2, Scenario::GeneralizedDA,
                 Scenario::DeterminingInterpolant, Scenario::BOnlyControl, Scenario::UOnlyExploratory})
    if (to_string(x) == s) return x;
  throw Error("unknown scenario '" + std::string(s) + "'");
}

// ---------------------------------------------------------------------------
// Configuration

struct ExperimentConfig {
  Scenario scenario = Scenario::Baseline;
  std::string output_dir = "runs/run";
  int n = 64;
  double Re = 5.0;
  double Rm = 5.0;
  std::uint64_t seed = 1;
  double dt = 0.005;
  double horizon = 20.0;
  double sample_interval = 0.01;

  // Forcing: random_low_mode | kolmogorov | none. Elsasser forcing is built
  // from velocity forcing f1 and induction forcing g1.
  std::string forcing_kind = "random_low_mode";
  std::uint64_t forcing_seed = 11;
  int forcing_k_max = 2;
  int forcing_wavenumber = 2;
  double forcing_amplitude = 1.0;
  bool forcing_magnetic = true;
  std::optional<double> forcing_grashof = 10.0;  // rescales the forcing to this G
  double modulation_amplitude = 0.0;
  double modulation_frequency = 0.0;
  double modulation_decay = 0.0;

  // Reference initial data: random divergence-free u0 (and b0).
  int init_k_max = 8;
  double init_decay = 1.0;
  double init_amplitude = 0.1;
  bool init_magnetic = true;
  std::string init_assimilated = "zero";  // zero | copy | random

  bool spinup_enabled = true;
  double spinup_tolerance = 0.01;
  double spinup_max_time = 200.0;
  int spinup_min_windows = 2;

  InterpolantKind interpolant_kind = InterpolantKind::SpectralProjection;
  double h = 0.125;
  std::optional<double> c1, c2, c3;
  int verify_samples = 1000;
  std::uint64_t verify_seed = 7;
  ObservationMask mask = ObservationMask::All;
  double mu = 50.0;

  // Decaying perturbations of the assimilated system (GeneralizedDA).
  double delta_amplitude = 0.0;
  double delta_decay = 1.0;
  double eps_amplitude = 0.0;
  double eps_decay = 1.0;

  // Second solution of the determining experiment.
  std::uint64_t seed2 = 2;
  double forcing_difference = 1.0;  // relative size of the decaying forcing difference
  double forcing_difference_decay = 1.0;

  std::optional<TheoremId> theorem;
  std::map<std::string, double> constants;  // overrides of analysis constants

  double min_orders = 6.0;
  double min_orders_type2 = 4.0;
  double min_r2 = 0.98;
  double nonconvergence_ratio = 1e-2;
  double determining_ratio = 1e-3;

  std::map<std::string, int> lines;  // key -> source line, for diagnostics
};

namespace detail {

inline std::string line_of(const ExperimentConfig& c, const std::string& key) {
  auto it = c.lines.find(key);
  return it == c.lines.end() ? std::string() : "line " + std::to_string(it->second) + ": ";
}

struct Field {
  std::string key;
  std::function<void(ExperimentConfig&, const YAML::Node&)> parse;
  std::function<std::string(const ExperimentConfig&)> emit;
};

template <class T>
T scalar(const YAML::Node& n) {
  if (!n.IsScalar()) throw YAML::BadConversion(n.Mark());
  return n.as<T>();
}

inline std::string emit_bool(bool b) { return b ? "true" : "false"; }
inline std::string emit_opt(const std::optional<double>& x) { return x ? format_double(*x) : "null"; }

inline std::optional<double> parse_opt(const YAML::Node& n) {
  if (n.IsNull()) return std::nullopt;
  return scalar<double>(n);
}

template <class T>
Field number(std::string key, T ExperimentConfig::*m) {
  return {key, [m](ExperimentConfig& c, const YAML::Node& n) { c.*m = scalar<T>(n); },
          [m](const ExperimentConfig& c) {
            if constexpr (std::is_floating_point_v<T>) return format_double(c.*m);
            else return std::to_string(c.*m);
          }};
}

inline Field boolean(std::string key, bool ExperimentConfig::*m) {
  return {key, [m](ExperimentConfig& c, const YAML::Node& n) { c.*m = scalar<bool>(n); },
          [m](const ExperimentConfig& c) { return emit_bool(c.*m); }};
}

inline Field text(std::string key, std::string ExperimentConfig::*m) {
  return {key, [m](ExperimentConfig& c, const YAML::Node& n) { c.*m = scalar<std::string>(n); },
          [m](const ExperimentConfig& c) { return c.*m; }};
}

inline Field optional_number(std::string key, std::optional<double> ExperimentConfig::*m) {
  return {key, [m](ExperimentConfig& c, const YAML::Node& n) { c.*m = parse_opt(n); },
          [m](const ExperimentConfig& c) { return emit_opt(c.*m); }};
}

inline const std::vector<std::string>& constant_names() {
  static const std::vector<std::string> names{"c_L", "c_B", "c_T", "c_M", "c", "C", "c_tilde_1st", "c_tilde_T2"};
  return names;
}

inline const std::vector<Field>& fields() {
  static const std::vector<Field> table = [] {
    std::vector<Field> f{
        {"scenario", [](ExperimentConfig& c, const YAML::Node& n) { c.scenario = parse_scenario(scalar<std::string>(n)); },
         [](const ExperimentConfig& c) { return std::string(to_string(c.scenario)); }},
        text("output_dir", &ExperimentConfig::output_dir),
        number("n", &ExperimentConfig::n),
        number("Re", &ExperimentConfig::Re),
        number("Rm", &ExperimentConfig::Rm),
        number("seed", &ExperimentConfig::seed),
        number("dt", &ExperimentConfig::dt),
        number("horizon", &ExperimentConfig::horizon),
        number("sample_interval", &ExperimentConfig::sample_interval),
        text("forcing.kind", &ExperimentConfig::forcing_kind),
        number("forcing.seed", &ExperimentConfig::forcing_seed),
        number("forcing.k_max", &ExperimentConfig::forcing_k_max),
        number("forcing.wavenumber", &ExperimentConfig::forcing_wavenumber),
        number("forcing.amplitude", &ExperimentConfig::forcing_amplitude),
        boolean("forcing.magnetic", &ExperimentConfig::forcing_magnetic),
        optional_number("forcing.grashof", &ExperimentConfig::forcing_grashof),
        number("forcing.modulation_amplitude", &ExperimentConfig::modulation_amplitude),
        number("forcing.modulation_frequency", &ExperimentConfig::modulation_frequency),
        number("forcing.modulation_decay", &ExperimentConfig::modulation_decay),
        number("init.k_max", &ExperimentConfig::init_k_max),
        number("init.decay", &ExperimentConfig::init_decay),
        number("init.amplitude", &ExperimentConfig::init_amplitude),
        boolean("init.magnetic", &ExperimentConfig::init_magnetic),
        text("init.assimilated", &ExperimentConfig::init_assimilated),
        boolean("spinup.enabled", &ExperimentConfig::spinup_enabled),
        number("spinup.tolerance", &ExperimentConfig::spinup_tolerance),
        number("spinup.max_time", &ExperimentConfig::spinup_max_time),
        number("spinup.min_windows", &ExperimentConfig::spinup_min_windows),
        {"interpolant.kind",
         [](ExperimentConfig& c, const YAML::Node& n) { c.interpolant_kind = parse_interpolant_kind(scalar<std::string>(n)); },
         [](const ExperimentConfig& c) { return std::string(to_string(c.interpolant_kind)); }},
        number("interpolant.h", &ExperimentConfig::h),
        optional_number("interpolant.c1", &ExperimentConfig::c1),
        optional_number("interpolant.c2", &ExperimentConfig::c2),
        optional_number("interpolant.c3", &ExperimentConfig::c3),
        number("interpolant.verify_samples", &ExperimentConfig::verify_samples),
        number("interpolant.verify_seed", &ExperimentConfig::verify_seed),
        {"mask", [](ExperimentConfig& c, const YAML::Node& n) { c.mask = parse_mask(scalar<std::string>(n)); },
         [](const ExperimentConfig& c) { return std::string(to_string(c.mask)); }},
        number("mu", &ExperimentConfig::mu),
        number("perturbation.delta_amplitude", &ExperimentConfig::delta_amplitude),
        number("perturbation.delta_decay", &ExperimentConfig::delta_decay),
        number("perturbation.eps_amplitude", &ExperimentConfig::eps_amplitude),
        number("perturbation.eps_decay", &ExperimentConfig::eps_decay),
        number("determining.seed2", &ExperimentConfig::seed2),
        number("determining.forcing_difference", &ExperimentConfig::forcing_difference),
        number("determining.forcing_difference_decay", &ExperimentConfig::forcing_difference_decay),
        {"theorem",
         [](ExperimentConfig& c, const YAML::Node& n) {
           if (n.IsNull()) c.theorem.reset();
           else c.theorem = parse_theorem_id(scalar<std::string>(n));
         },
         [](const ExperimentConfig& c) { return c.theorem ? std::string(to_string(*c.theorem)) : std::string("null"); }},
        number("checks.min_orders", &ExperimentConfig::min_orders),
        number("checks.min_orders_type2", &ExperimentConfig::min_orders_type2),
        number("checks.min_r2", &ExperimentConfig::min_r2),
        number("checks.nonconvergence_ratio", &ExperimentConfig::nonconvergence_ratio),
        number("checks.determining_ratio", &ExperimentConfig::determining_ratio),
    };
    for (const auto& name : constant_names()) {
      const std::string key = "constants." + name;
      f.push_back({key,
                   [name](ExperimentConfig& c, const YAML::Node& n) {
                     if (n.IsNull()) c.constants.erase(name);
                     else c.constants[name] = scalar<double>(n);
                   },
                   [name](const ExperimentConfig& c) {
                     auto it = c.constants.find(name);
                     return it == c.constants.end() ? std::string("null") : format_double(it->second);
                   }});
    }
    return f;
  }();
  return table;
}

}  // namespace detail

inline TheoremId default_theorem(const ExperimentConfig& c) {
  if (c.theorem) return *c.theorem;
  if (c.scenario == Scenario::Type2) return TheoremId::T2Thm1;
  const bool h1 = c.scenario == Scenario::H1Track;
  switch (c.mask) {
    case ObservationMask::FirstComponent: return h1 ? TheoremId::ThmH11st : TheoremId::Thm1st;
    case ObservationMask::VOnly:
    case ObservationMask::WOnly: return h1 ? TheoremId::ThmH1V : TheoremId::ThmV;
    default: return h1 ? TheoremId::ThmH1All : TheoremId::ThmAll;
  }
}

// Checks cross-field invariants; throws ConfigError.
inline void validate(const ExperimentConfig& c) {
  auto fail = [&](const std::string& key, const std::string& what) {
    throw ConfigError(detail::line_of(c, key) + "key '" + key + "': " + what);
  };
  if (c.n < 8 || c.n % 2 != 0) fail("n", "grid size must be an even integer >= 8");
  if (!(c.Re > 0.0)) fail("Re", "must be positive");
  if (!(c.Rm > 0.0)) fail("Rm", "must be positive");
  if (!(c.dt > 0.0)) fail("dt", "must be positive");
  if (!(c.horizon > 0.0)) fail("horizon", "must be positive");
  if (!(c.sample_interval >= c.dt)) fail("sample_interval", "must be at least dt");
  if (c.forcing_kind != "random_low_mode" && c.forcing_kind != "kolmogorov" && c.forcing_kind != "none")
    fail("forcing.kind", "expected random_low_mode, kolmogorov or none");
  const int kc = c.n / 3;
  if (c.forcing_k_max < 1 || c.forcing_k_max > kc) fail("forcing.k_max", "must lie in [1, n/3]");
  if (c.forcing_wavenumber < 1 || c.forcing_wavenumber > kc) fail("forcing.wavenumber", "must lie in [1, n/3]");
  if (c.forcing_grashof && !(*c.forcing_grashof >= 0.0)) fail("forcing.grashof", "must be >= 0");
  if (c.init_k_max < 1 || c.init_k_max > kc) fail("init.k_max", "must lie in [1, n/3]");
  if (!(c.init_amplitude >= 0.0)) fail("init.amplitude", "must be >= 0");
  if (c.init_assimilated != "zero" && c.init_assimilated != "copy" && c.init_assimilated != "random")
    fail("init.assimilated", "expected zero, copy or random");
  if (!(c.spinup_tolerance > 0.0)) fail("spinup.tolerance", "must be positive");
  if (!(c.spinup_max_time >= 0.0)) fail("spinup.max_time", "must be >= 0");
  if (c.spinup_min_windows < 1) fail("spinup.min_windows", "must be >= 1");
  if (!(c.mu >= 0.0) || !std::isfinite(c.mu)) fail("mu", "must be finite and >= 0");
  if (c.verify_samples < 0) fail("interpolant.verify_samples", "must be >= 0");
  try {
    const auto spec = make_interpolant(c.interpolant_kind, c.h);
    check_compatible(spec, Grid(c.n));
  } catch (const Error& e) {
    fail("interpolant.h", e.what());
  }
  for (const char* k : {"interpolant.c1", "interpolant.c2", "interpolant.c3"}) {
    const auto& v = std::string(k) == "interpolant.c1" ? c.c1 : std::string(k) == "interpolant.c2" ? c.c2 : c.c3;
    if (v && !(*v > 0.0)) fail(k, "must be positive");
  }
  for (const char* k : {"perturbation.delta_decay", "perturbation.eps_decay", "determining.forcing_difference_decay"}) {
    const double v = std::string(k) == "perturbation.delta_decay" ? c.delta_decay
                     : std::string(k) == "perturbation.eps_decay" ? c.eps_decay
                                                                  : c.forcing_difference_decay;
    if (!(v > 0.0)) fail(k, "must be positive");
  }
  if (c.scenario == Scenario::BOnlyControl) {
    if (c.forcing_magnetic) fail("forcing.magnetic", "BOnlyControl requires g1 = 0 (set false)");
    if (c.init_magnetic) fail("init.magnetic", "BOnlyControl requires b = 0 (set false)");
    if (c.mask != ObservationMask::MagneticOnly) fail("mask", "BOnlyControl observes MagneticOnly");
  }
  if (c.scenario == Scenario::UOnlyExploratory && c.mask != ObservationMask::VelocityOnly)
    fail("mask", "UOnlyExploratory observes VelocityOnly");
  if (c.scenario == Scenario::Type2 && c.interpolant_kind != InterpolantKind::NodalBilinear)
    fail("interpolant.kind", "Type2 uses a NodalBilinear interpolant");
}

// Parses a flat YAML mapping. Unknown or duplicate keys are rejected with the
// line they appear on.
inline ExperimentConfig parse_config(const std::string& text) {
  YAML::Node root;
  try {
    root = YAML::Load(text);
  } catch (const YAML::Exception& e) {
    throw ConfigError("line " + std::to_string(e.mark.line + 1) + ": malformed YAML: " + e.msg);
  }
  ExperimentConfig c;
  if (root.IsNull()) {
    validate(c);
    return c;
  }
  if (!root.IsMap()) throw ConfigError("config must be a flat key: value mapping");
  std::map<std::string, const detail::Field*> index;
  for (const auto& f : detail::fields()) index[f.key] = &f;
  std::set<std::string> seen;
  for (auto it = root.begin(); it != root.end(); ++it) {
    const int line = it->first.Mark().line + 1;
    const std::string key = it->first.as<std::string>();
    const std::string where = "line " + std::to_string(line) + ": ";
    auto f = index.find(key);
    if (f == index.end()) throw ConfigError(where + "unknown key '" + key + "'");
    if (!seen.insert(key).second) throw ConfigError(where + "duplicate key '" + key + "'");
    if (it->second.IsMap() || it->second.IsSequence())
      throw ConfigError(where + "key '" + key + "' must hold a scalar value");
    try {
      f->second->parse(c, it->second);
    } catch (const YAML::Exception&) {
      throw ConfigError(where + "key '" + key + "': cannot parse value '" + it->second.Scalar() + "'");
    } catch (const Error& e) {
      throw ConfigError(where + "key '" + key + "': " + e.what());
    }
    c.lines[key] = line;
  }
  validate(c);
  return c;
}

inline ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open config '" + path.string() + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

// Every key with its resolved value, in schema order.
inline std::string normalized_yaml(const ExperimentConfig& c) {
  std::ostringstream os;
  for (const auto& f : detail::fields()) {
    std::string v = f.emit(c);
    if (f.key == "output_dir") v = "\"" + v + "\"";
    os << f.key << ": " << v << '\n';
  }
  return os.str();
}

// ---------------------------------------------------------------------------
// Setup

struct Setup {
  Grid grid;
  ElsasserParams params;
  ForcingSpec forcing;
  double G;
  ElsasserState initial;
  InterpolantSpec interpolant;
  ConstantsLedger constants;
  std::optional<Type1Report> type1;
  std::optional<Type2Report> type2;
};

namespace detail {

inline std::uint64_t derive_seed(std::uint64_t base, std::uint64_t salt) {
  std::seed_seq seq{base, salt};
  std::array<std::uint64_t, 1> out{};
  std::array<std::uint32_t, 2> raw{};
  seq.generate(raw.begin(), raw.end());
  out[0] = (std::uint64_t(raw[0]) << 32) | raw[1];
  return out[0];
}

inline SpectralVector normalized(SpectralVector u, double amplitude) {
  const double norm = l2_norm(u);
  if (norm > 0.0) u *= amplitude / norm;
  return u;
}

inline ForcingSpec build_forcing(const ExperimentConfig& c, const Grid& g, const ElsasserParams& p) {
  if (c.forcing_kind == "none") return ForcingSpec(g);
  SpectralVector f1 = zero_vector(g), g1 = zero_vector(g);
  if (c.forcing_kind == "kolmogorov") {
    // f1 = A (sin 2 pi k y, 0), g1 = A (0, sin 2 pi k x)
    SpectralScalar s(g);
    s.set_mode(0, c.forcing_wavenumber, cplx(0.0, -0.5 * c.forcing_amplitude));
    f1 = SpectralVector(s, SpectralScalar(g), true);
    if (c.forcing_magnetic) {
      SpectralScalar r(g);
      r.set_mode(c.forcing_wavenumber, 0, cplx(0.0, -0.5 * c.forcing_amplitude));
      g1 = SpectralVector(SpectralScalar(g), r, true);
    }
  } else {
    f1 = normalized(random_divfree_field(g, c.forcing_seed, 0.0, c.forcing_k_max), c.forcing_amplitude);
    if (c.forcing_magnetic)
      g1 = normalized(random_divfree_field(g, derive_seed(c.forcing_seed, 1), 0.0, c.forcing_k_max),
                      c.forcing_amplitude);
  }
  const auto fg = elsasser_forcing(f1, g1, p.swapped);
  const Modulation m{c.modulation_amplitude, c.modulation_frequency, 1.0, c.modulation_decay};
  ForcingSpec spec(g, {ForcingTerm{fg.f, fg.g, m}});
  if (c.forcing_grashof) {
    const double G0 = grashof_number(spec, p);
    if (!(G0 > 0.0)) throw ConfigError("forcing.grashof set but the forcing vanishes");
    spec = spec.scaled(*c.forcing_grashof / G0);
  }
  return spec;
}

inline ElsasserState random_state(const ExperimentConfig& c, const Grid& g, const ElsasserParams& p,
                                  std::uint64_t seed) {
  const SpectralVector u =
      normalized(random_divfree_field(g, derive_seed(seed, 2), c.init_decay, c.init_k_max), c.init_amplitude);
  const SpectralVector b =
      c.init_magnetic
          ? normalized(random_divfree_field(g, derive_seed(seed, 3), c.init_decay, c.init_k_max), c.init_amplitude)
          : zero_vector(g);
  auto vw = to_elsasser(u, b, p.swapped);
  return ElsasserState(std::move(vw.v), std::move(vw.w));
}

}  // namespace detail

inline Setup build_setup(const ExperimentConfig& c) {
  validate(c);
  const Grid g(c.n);
  const auto p = derive_elsasser_params(c.Re, c.Rm);
  ForcingSpec forcing = detail::build_forcing(c, g, p);
  const double G = grashof_number(forcing, p);
  ElsasserState initial = detail::random_state(c, g, p, c.seed);
  InterpolantSpec spec = make_interpolant(c.interpolant_kind, c.h);

  ConstantsLedger constants;
  constants["c_L"] = {1.0 / std::sqrt(two_pi), "default"};
  constants["c_B"] = {1.0, "default"};
  constants["c_T"] = {1.0, "default"};
  constants["c_M"] = {1.0, "default"};
  for (const auto& [k, v] : c.constants) constants[k] = {v, "configured"};
  constants = complete_constants(std::move(constants), p);

  Setup s{g, p, std::move(forcing), G, std::move(initial), spec, std::move(constants), std::nullopt, std::nullopt};
  if (spec.type_class == 1) {
    if (c.c1) {
      s.interpolant.c1 = *c.c1;
      s.constants["c1"] = {*c.c1, "configured"};
    } else {
      s.type1 = verify_type1_bound(spec, g, c.verify_samples, c.verify_seed);
      s.interpolant.c1 = s.type1->c1;
      s.constants["c1"] = {s.type1->c1, "empirical"};
    }
  } else {
    if (c.c2 && c.c3) {
      s.interpolant.c2 = *c.c2;
      s.interpolant.c3 = *c.c3;
      s.constants["c2"] = {*c.c2, "configured"};
      s.constants["c3"] = {*c.c3, "configured"};
    } else {
      s.type2 = verify_type2_bound(spec, g, c.verify_samples, c.verify_seed);
      s.interpolant.c2 = s.type2->c2;
      s.interpolant.c3 = s.type2->c3;
      s.constants["c2"] = {s.type2->c2, "empirical"};
      s.constants["c3"] = {s.type2->c3, "empirical"};
    }
  }
  return s;
}

inline NudgingConfig nudging_config(const ExperimentConfig& c, const Setup& s) {
  NudgingConfig nc;
  nc.mu = c.mu;
  nc.interpolant = s.interpolant;
  nc.mask = c.mask;
  const Modulation delta_env{1.0, 0.0, 0.0, c.delta_decay};
  const Modulation eps_env{1.0, 0.0, 0.0, c.eps_decay};
  if (c.delta_amplitude != 0.0) {
    const auto d1 = detail::normalized(random_divfree_field(s.grid, detail::derive_seed(c.seed, 4), 0.0, 4),
                                       c.delta_amplitude);
    const auto d2 = detail::normalized(random_divfree_field(s.grid, detail::derive_seed(c.seed, 5), 0.0, 4),
                                       c.delta_amplitude);
    nc.delta = ForcingSpec(s.grid, {ForcingTerm{d1, d2, delta_env}});
  }
  if (c.eps_amplitude != 0.0) {
    nc.eps1 = Perturbation{detail::normalized(random_divfree_field(s.grid, detail::derive_seed(c.seed, 6), 1.0, 8),
                                              c.eps_amplitude),
                           eps_env};
    nc.eps2 = Perturbation{detail::normalized(random_divfree_field(s.grid, detail::derive_seed(c.seed, 7), 1.0, 8),
                                              c.eps_amplitude),
                           eps_env};
  }
  return nc;
}

inline RunSpec run_spec(const ExperimentConfig& c, const Setup& s) {
  RunSpec r{s.params, s.forcing, s.initial, c.dt, c.horizon, c.sample_interval, std::nullopt, InitMode::Zero,
            std::nullopt};
  if (c.spinup_enabled) r.spin_up = SpinUpPolicy{c.spinup_tolerance, c.spinup_max_time, c.spinup_min_windows};
  if (c.init_assimilated == "copy") r.init_mode = InitMode::CopyReference;
  if (c.init_assimilated == "random") {
    r.init_mode = InitMode::Custom;
    r.custom_init = detail::random_state(c, s.grid, s.params, detail::derive_seed(c.seed, 8));
  }
  return r;
}

// ---------------------------------------------------------------------------
// Output helpers

using Json = nlohmann::ordered_json;

inline Json num(double x) {
  if (std::isfinite(x)) return x;
  if (std::isnan(x)) return "nan";
  return x > 0 ? "inf" : "-inf";
}

inline Json to_json(const ConstantsLedger& c) {
  Json j = Json::object();
  for (const auto& [k, v] : c) j[k] = {{"value", num(v.value)}, {"provenance", v.provenance}};
  return j;
}

inline Json to_json(const TheoremThresholds& t) {
  return {{"theorem_id", std::string(to_string(t.theorem_id))},
          {"G", num(t.G)},
          {"mu_min", num(t.mu_min)},
          {"h_max", num(t.h_max)},
          {"mu_at_h_max", num(t.mu)}};
}

inline Json to_json(const Type1Report& r) {
  return {{"kind", std::string(to_string(r.kind))}, {"h", r.h},           {"type_class", 1},
          {"c1", r.c1},                              {"empirical_c1", r.empirical_c1},
          {"n_samples", r.n_samples},               {"seed", r.seed}};
}

inline Json to_json(const Type2Report& r) {
  return {{"kind", std::string(to_string(r.kind))},
          {"h", r.h},
          {"type_class", 2},
          {"c2", r.c2},
          {"c3", r.c3},
          {"empirical_c2", r.empirical_c2},
          {"empirical_c3", r.empirical_c3},
          {"n_samples", r.n_samples},
          {"seed", r.seed}};
}

inline void write_text(const std::filesystem::path& p, const std::string& s) {
  std::ofstream out(p, std::ios::binary);
  if (!out) throw Error("cannot write '" + p.string() + "'");
  out << s;
  if (!out) throw Error("write failed for '" + p.string() + "'");
}

inline std::string csv(const std::vector<std::string>& header, const std::vector<std::vector<double>>& columns) {
  std::ostringstream os;
  for (std::size_t k = 0; k < header.size(); ++k) os << (k ? "," : "") << header[k];
  os << '\n';
  const std::size_t rows = columns.empty() ? 0 : columns[0].size();
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t k = 0; k < columns.size(); ++k) os << (k ? "," : "") << format_double(columns[k][r]);
    os << '\n';
  }
  return os.str();
}

inline std::string errors_csv(const ErrorSeries& e) {
  return csv({"t", "l2_eta", "l2_zeta", "h1_eta", "h1_zeta"}, {e.times, e.l2_eta, e.l2_zeta, e.h1_eta, e.h1_zeta});
}

inline std::string trajectory_csv(const std::vector<TrajectorySample>& tr) {
  std::vector<std::vector<double>> cols(6);
  for (const auto& s : tr)
    for (auto [k, v] : {std::pair{0, s.t}, {1, s.l2_v}, {2, s.l2_w}, {3, s.h1_v}, {4, s.h1_w}, {5, s.energy_residual}})
      cols[k].push_back(v);
  return csv({"t", "l2_v", "l2_w", "h1_v", "h1_w", "energy_residual"}, cols);
}

inline std::string primitive_csv(const std::vector<PrimitiveErrorSample>& pe) {
  std::vector<std::vector<double>> cols(3);
  for (const auto& s : pe) {
    cols[0].push_back(s.t);
    cols[1].push_back(s.l2_u);
    cols[2].push_back(s.l2_b);
  }
  return csv({"t", "l2_u_error", "l2_b_error"}, cols);
}

inline void write_snapshot_file(const std::filesystem::path& p, const SpectralVector& u) {
  std::ostringstream os;
  write_snapshot(os, u);
  write_text(p, os.str());
}

// ---------------------------------------------------------------------------
// Scenario runs

struct Check {
  std::string name;
  bool passed;
  std::string detail;
};

struct ScenarioOutcome {
  int exit_code = exit_code::ok;
  std::vector<Check> checks;
  Json summary;
  std::filesystem::path directory;
  std::optional<AssimilationResult> result;
};

// Decreasing trend over the tail half of the part of the series above the
// round-off floor `floor_rel * peak`. A series that is identically zero
// counts as decreasing.
inline bool trend_before_floor(std::span<const double> t, std::span<const double> y, double floor_rel = 1e-12) {
  const double peak = *std::max_element(y.begin(), y.end());
  if (peak == 0.0) return true;
  std::size_t end = y.size();
  const std::size_t argmax = static_cast<std::size_t>(std::max_element(y.begin(), y.end()) - y.begin());
  for (std::size_t k = argmax; k < y.size(); ++k)
    if (y[k] <= floor_rel * peak) {
      end = k + 1;
      break;
    }
  if (end < 20) return false;
  return decreasing_trend(t.subspan(0, end), y.subspan(0, end));
}

namespace detail {

inline Check convergence_check(const std::string& name, const ConvergenceVerdict& v, double min_orders) {
  std::ostringstream os;
  os << "orders " << format_double(v.orders) << " (need " << min_orders << "), rate " << format_double(v.fit.rate)
     << ", R^2 " << format_double(v.fit.r2);
  return {name, v.success, os.str()};
}

inline Json verdict_json(const ConvergenceVerdict& v) {
  return {{"initial", num(v.initial)},   {"terminal", num(v.terminal)}, {"orders", num(v.orders)},
          {"rate", num(v.fit.rate)},     {"r2", num(v.fit.r2)},         {"fit_samples", v.fit.samples},
          {"floor_time", num(v.floor_time)}, {"success", v.success}};
}

inline double sample_spacing(const std::vector<double>& t) { return t.size() > 1 ? t[1] - t[0] : 0.0; }

}  // namespace detail

// Determining-interpolant experiment: two independent solutions whose
// forcings differ by a decaying term, plus the auxiliary solution nudged
// toward solution 1 with mu = (a-b)/(c1^2 h^2) and driven by forcing 2.
struct DeterminingReport {
  std::vector<double> times;
  std::vector<double> observed_difference;  // |I_h(v1 - v2)|, |I_h(w1 - w2)| combined
  std::vector<double> full_difference;      // |v1 - v2|, |w1 - w2| combined
  std::vector<double> auxiliary_to_1;
  std::vector<double> auxiliary_to_2;
  double mu = 0.0;
  double G1 = 0.0, G2 = 0.0;
  bool observed_decays = false;
  bool full_decays = false;
  double full_peak = 0.0, full_terminal = 0.0;
  bool passed = false;
};

inline DeterminingReport run_determining_experiment(const ExperimentConfig& c, const Setup& s) {
  const auto& p = s.params;
  ForcingSpec f2 = s.forcing;
  if (c.forcing_difference != 0.0) {
    const double scale = c.forcing_difference * l2_norm(s.forcing.at(0.0).f);
    const auto df = detail::normalized(random_divfree_field(s.grid, detail::derive_seed(c.seed, 9), 0.0, 4), scale);
    const auto dg = detail::normalized(random_divfree_field(s.grid, detail::derive_seed(c.seed, 10), 0.0, 4), scale);
    f2.add(ForcingTerm{df, dg, Modulation{1.0, 0.0, 0.0, c.forcing_difference_decay}});
  }
  DeterminingReport rep;
  rep.G1 = s.G;
  rep.G2 = grashof_number(f2, p);
  if (std::abs(rep.G1 - rep.G2) > 1e-12 * std::max(1.0, rep.G1))
    throw Error("determining experiment needs equal Grashof numbers, got " + format_double(rep.G1) + " and " +
                format_double(rep.G2));
  const double c1 = s.interpolant.c1.value_or(s.interpolant.c2.value_or(1.0));
  rep.mu = p.gap() / (c1 * c1 * s.interpolant.h * s.interpolant.h);

  NudgingConfig nc;
  nc.mu = rep.mu;
  nc.interpolant = s.interpolant;
  nc.mask = ObservationMask::All;
  ForcingSpec delta(s.grid);
  for (std::size_t k = 1; k < f2.terms().size(); ++k) delta.add(f2.terms()[k]);
  if (!delta.empty()) nc.delta = delta;

  ElsasserState s2 = detail::random_state(c, s.grid, p, c.seed2);
  CoupledStepper aux(p, s.forcing, nc);
  MhdIntegrator second(p, f2);
  AssimilationPair pair = init_assimilation(s.initial, InitMode::Zero);
  const long steps = std::lround(c.horizon / c.dt);
  const long every = std::max(1L, std::lround(c.sample_interval / c.dt));
  auto record = [&] {
    const auto& v1 = pair.reference;
    const SpectralVector dv = v1.v - s2.v, dw = v1.w - s2.w;
    rep.times.push_back(v1.t);
    rep.observed_difference.push_back(
        std::hypot(l2_norm(apply_interpolant(s.interpolant, dv)), l2_norm(apply_interpolant(s.interpolant, dw))));
    rep.full_difference.push_back(std::hypot(l2_norm(dv), l2_norm(dw)));
    rep.auxiliary_to_1.push_back(error_norms(v1, pair.assimilated).l2());
    rep.auxiliary_to_2.push_back(error_norms(s2, pair.assimilated).l2());
    if (!std::isfinite(rep.full_difference.back() + rep.auxiliary_to_1.back()))
      throw Instability("non-finite state in determining experiment at t=" + format_double(v1.t) +
                        " (mu=" + format_double(rep.mu) + ", dt=" + format_double(c.dt) + ")");
  };
  record();
  for (long k = 1; k <= steps; ++k) {
    pair = aux.step(pair, c.dt);
    s2 = second.step(s2, c.dt);
    if (k % every == 0) record();
  }
  rep.observed_decays = trend_before_floor(rep.times, rep.observed_difference);
  rep.full_decays = trend_before_floor(rep.times, rep.full_difference);
  rep.full_peak = *std::max_element(rep.full_difference.begin(), rep.full_difference.end());
  rep.full_terminal = rep.full_difference.back();
  rep.passed = rep.full_decays && rep.full_terminal <= c.determining_ratio * rep.full_peak;
  return rep;
}

namespace detail {

inline void finish(ScenarioOutcome& out) {
  bool ok = true;
  Json checks = Json::array();
  for (const auto& ch : out.checks) {
    ok = ok && ch.passed;
    checks.push_back({{"name", ch.name}, {"passed", ch.passed}, {"detail", ch.detail}});
  }
  if (out.exit_code == exit_code::ok && !ok) out.exit_code = exit_code::check_failed;
  out.summary["checks"] = checks;
  out.summary["exit_code"] = out.exit_code;
}

inline Json run_header(const ExperimentConfig& c, const Setup& s) {
  return {{"scenario", std::string(to_string(c.scenario))},
          {"regime", "desk-scale choice"},
          {"n", c.n},
          {"Re", c.Re},
          {"Rm", c.Rm},
          {"alpha", s.params.alpha},
          {"beta", s.params.beta},
          {"swapped", s.params.swapped},
          {"G", num(s.G)},
          {"mu", c.mu},
          {"h", s.interpolant.h},
          {"interpolant", std::string(to_string(s.interpolant.kind))},
          {"mask", std::string(to_string(c.mask))},
          {"dt", c.dt},
          {"horizon", c.horizon},
          {"seed", c.seed}};
}

}  // namespace detail

// Executes one scenario end to end and writes its run directory.
inline ScenarioOutcome run_scenario(const ExperimentConfig& c) {
  namespace fs = std::filesystem;
  ScenarioOutcome out;
  out.directory = c.output_dir;
  fs::create_directories(out.directory);
  write_text(out.directory / "config.yaml", normalized_yaml(c));

  const Setup s = build_setup(c);
  out.summary = detail::run_header(c, s);
  write_text(out.directory / "constants.json", to_json(s.constants).dump(2) + "\n");

  const TheoremId theorem = default_theorem(c);
  const auto thresholds = theorem_thresholds(theorem, s.G, s.params, s.constants);
  Json thr = to_json(thresholds);
  thr["constants_used"] = to_json(thresholds.constants_used);
  thr["actual"] = {{"mu", c.mu}, {"h", s.interpolant.h}};
  thr["mu_above_threshold"] = c.mu > thresholds.mu_min;
  thr["h_below_threshold"] = s.interpolant.h < threshold_h(theorem, c.mu, s.params, s.constants);
  if (s.type1) out.summary["interpolant_verification"] = to_json(*s.type1);
  if (s.type2) out.summary["interpolant_verification"] = to_json(*s.type2);

  auto write_thresholds = [&](Json extra) {
    for (auto& [k, v] : extra.items()) thr[k] = v;
    write_text(out.directory / "thresholds.json", thr.dump(2) + "\n");
  };

  try {
    if (c.scenario == Scenario::DeterminingInterpolant) {
      const auto rep = run_determining_experiment(c, s);
      write_text(out.directory / "determining.csv",
                 csv({"t", "observed_difference", "full_difference", "auxiliary_error_1", "auxiliary_error_2"},
                     {rep.times, rep.observed_difference, rep.full_difference, rep.auxiliary_to_1, rep.auxiliary_to_2}));
      out.checks.push_back({"full_difference_trend", rep.full_decays, "tail-half trend of |v1-v2|,|w1-w2|"});
      out.checks.push_back({"full_difference_terminal", rep.full_terminal <= c.determining_ratio * rep.full_peak,
                            "terminal " + format_double(rep.full_terminal) + " vs peak " + format_double(rep.full_peak)});
      out.checks.push_back({"observed_difference_trend", rep.observed_decays, "tail-half trend of |I_h(v1-v2)|"});
      out.summary["determining"] = {{"mu", rep.mu},
                                    {"G1", num(rep.G1)},
                                    {"G2", num(rep.G2)},
                                    {"full_peak", num(rep.full_peak)},
                                    {"full_terminal", num(rep.full_terminal)},
                                    {"observed_terminal", num(rep.observed_difference.back())}};
      write_thresholds({{"checks_passed", rep.passed}});
      detail::finish(out);
      write_text(out.directory / "summary.json", out.summary.dump(2) + "\n");
      return out;
    }

    const NudgingConfig nc = nudging_config(c, s);
    auto res = run_assimilation(nc, run_spec(c, s));
    write_text(out.directory / "errors.csv", errors_csv(res.errors));
    write_text(out.directory / "trajectory.csv", trajectory_csv(res.trajectory));
    write_text(out.directory / "primitive_errors.csv", primitive_csv(res.primitive_errors));
    write_snapshot_file(out.directory / "reference_v.snapshot", res.final_state.reference.v);
    write_snapshot_file(out.directory / "reference_w.snapshot", res.final_state.reference.w);
    write_snapshot_file(out.directory / "assimilated_v.snapshot", res.final_state.assimilated.v);
    write_snapshot_file(out.directory / "assimilated_w.snapshot", res.final_state.assimilated.w);

    const auto& e = res.errors;
    const auto l2 = e.l2(), h1 = e.h1();
    const ConvergenceCriteria crit{c.min_orders, c.min_r2, 1e-12};
    const auto vl2 = evaluate_convergence(e.times, l2, crit);
    const auto vh1 = evaluate_convergence(e.times, h1, crit);
    out.summary["spin_up"] = {{"time", res.spin_up.time},
                              {"windows", res.spin_up.windows},
                              {"settled", res.spin_up.settled},
                              {"window_mean_enstrophy", res.spin_up.last_window_mean}};
    out.summary["l2"] = detail::verdict_json(vl2);
    out.summary["h1"] = detail::verdict_json(vh1);
    out.summary["energy_budget"] = {{"violations", res.budget.violations},
                                    {"max_residual", num(res.budget.max_residual)},
                                    {"max_residual_over_tolerance", num(res.max_budget_tolerance_ratio)}};

    const double a = s.params.gap();
    const double T = 1.0 / (pi * pi * a);
    const auto ib = check_int_bound(res.step_times, res.step_enstrophy, s.G, s.params);
    const auto ib_half = check_int_bound(res.step_times, res.step_enstrophy, 0.5 * s.G, s.params);
    out.summary["int_bound"] = {{"bound", num(ib.bound)},
                                {"worst_integral", num(ib.worst_integral)},
                                {"worst_margin", num(ib.worst_margin)},
                                {"passed", ib.passed},
                                {"halved_G_passed", ib_half.passed},
                                {"halved_G_margin", num(ib_half.worst_margin)}};
    {
      const double cL = require(s.constants, "c_L");
      const double coef = (std::pow(cL, 4) + std::pow(a, 4)) / (2.0 * a * a * a);
      std::vector<double> psi(res.step_enstrophy.size());
      for (std::size_t k = 0; k < psi.size(); ++k) psi[k] = c.mu - coef * res.step_enstrophy[k];
      try {
        const auto gr = gronwall_condition_check(res.step_times, psi, T);
        out.summary["gronwall"] = {{"min_window_average", num(gr.min_window_average)},
                                   {"max_negative_average", num(gr.max_negative_average)},
                                   {"conditions_hold", gr.conditions_hold}};
      } catch (const Error& err) {
        out.summary["gronwall"] = {{"error", err.what()}};
      }
    }

    const bool budget_ok = res.budget.passed();
    const Check budget{"energy_budget", budget_ok,
                       std::to_string(res.budget.violations) + " violations, max residual/tolerance " +
                           format_double(res.max_budget_tolerance_ratio)};
    const Check int_bound{"int_bound", ib.passed && ib.worst_margin > 0.0,
                          "worst margin " + format_double(ib.worst_margin)};
    const double dts = detail::sample_spacing(e.times);

    switch (c.scenario) {
      case Scenario::Baseline:
        out.checks.push_back(detail::convergence_check("l2_convergence", vl2, c.min_orders));
        out.checks.push_back(budget);
        out.checks.push_back(int_bound);
        break;
      case Scenario::H1Track: {
        out.checks.push_back(detail::convergence_check("l2_convergence", vl2, c.min_orders));
        out.checks.push_back(detail::convergence_check("h1_convergence", vh1, c.min_orders));
        const double on_l2 = onset_time(e.times, l2, vl2.fit.rate, vl2.floor_time);
        const double on_h1 = onset_time(e.times, h1, vh1.fit.rate, vh1.floor_time);
        out.summary["onset"] = {{"l2", on_l2}, {"h1", on_h1}};
        out.checks.push_back({"h1_onset", on_h1 >= on_l2 - dts * (1 + 1e-9),
                              "L2 onset " + format_double(on_l2) + ", H1 onset " + format_double(on_h1)});
        out.checks.push_back(budget);
        out.checks.push_back(int_bound);
        break;
      }
      case Scenario::Type2: {
        const int bad = count_type2_violations(s.interpolant, *s.interpolant.c2, *s.interpolant.c3, s.grid,
                                               c.verify_samples, detail::derive_seed(c.verify_seed, 1));
        out.checks.push_back({"type2_inequality", bad == 0, std::to_string(bad) + " violations on fresh fields"});
        ConvergenceCriteria c2 = crit;
        c2.min_orders = c.min_orders_type2;
        const auto v = evaluate_convergence(e.times, h1, c2);
        out.checks.push_back(detail::convergence_check("h1_convergence", v, c.min_orders_type2));
        out.checks.push_back(budget);
        break;
      }
      case Scenario::GeneralizedDA:
        out.checks.push_back({"l2_trend", trend_before_floor(e.times, l2), "tail-half trend of the L2 error"});
        out.checks.push_back(budget);
        break;
      case Scenario::BOnlyControl: {
        const auto& pe = res.primitive_errors;
        const double u0 = pe.front().l2_u, u1 = pe.back().l2_u;
        double bmax = 0.0;
        for (const auto& x : pe) bmax = std::max(bmax, x.l2_b);
        out.summary["velocity_error"] = {{"initial", num(u0)}, {"terminal", num(u1)}};
        out.checks.push_back({"velocity_nonconvergence", u1 > c.nonconvergence_ratio * u0,
                              "terminal " + format_double(u1) + " vs initial " + format_double(u0)});
        out.checks.push_back({"magnetic_error_zero", bmax <= 1e-12, "max |b - b~| " + format_double(bmax)});
        break;
      }
      case Scenario::UOnlyExploratory:
        break;
      case Scenario::DeterminingInterpolant:
        break;
    }
    write_thresholds({{"empirical_rate_l2", num(vl2.fit.rate)}, {"empirical_rate_h1", num(vh1.fit.rate)}});
    out.result = std::move(res);
  } catch (const Instability& err) {
    out.exit_code = exit_code::blow_up;
    out.summary["error"] = err.what();
    write_thresholds({});
  } catch (const CflViolation& err) {
    out.exit_code = exit_code::blow_up;
    out.summary["error"] = err.what();
    write_thresholds({});
  } catch (const ExplicitNudgingUnstable& err) {
    out.exit_code = exit_code::blow_up;
    out.summary["error"] = err.what();
    write_thresholds({});
  }
  detail::finish(out);
  write_text(out.directory / "summary.json", out.summary.dump(2) + "\n");
  return out;
}

// ---------------------------------------------------------------------------
// Interpolant verification

struct InterpolantVerification {
  Json report;
  int fresh_violations = 0;
};

inline InterpolantVerification verify_interpolant(const ExperimentConfig& c) {
  validate(c);
  const Grid g(c.n);
  const auto spec = make_interpolant(c.interpolant_kind, c.h);
  InterpolantVerification out;
  const std::uint64_t fresh = detail::derive_seed(c.verify_seed, 1);
  if (spec.type_class == 1) {
    const auto r = verify_type1_bound(spec, g, c.verify_samples, c.verify_seed);
    out.report = to_json(r);
    out.fresh_violations = count_type1_violations(spec, r.c1, g, c.verify_samples, fresh);
  } else {
    const auto r = verify_type2_bound(spec, g, c.verify_samples, c.verify_seed);
    out.report = to_json(r);
    out.fresh_violations = count_type2_violations(spec, r.c2, r.c3, g, c.verify_samples, fresh);
  }
  out.report["fresh_fields"] = c.verify_samples;
  out.report["fresh_violations"] = out.fresh_violations;
  return out;
}

// ---------------------------------------------------------------------------
// Sweeps

enum class SweepAxis { Mu, H, G };

inline SweepAxis parse_axis(std::string_view s) {
  if (s == "mu") return SweepAxis::Mu;
  if (s == "h") return SweepAxis::H;
  if (s == "G") return SweepAxis::G;
  throw ConfigError("unknown sweep axis '" + std::string(s) + "' (expected mu, h or G)");
}

inline std::string_view to_string(SweepAxis a) {
  switch (a) {
    case SweepAxis::Mu: return "mu";
    case SweepAxis::H: return "h";
    case SweepAxis::G: return "G";
  }
  return "?";
}

struct SweepRow {
  double value = 0.0;
  int exit_code = exit_code::error;
  std::string error;
  double rate = std::numeric_limits<double>::quiet_NaN();
  double r2 = std::numeric_limits<double>::quiet_NaN();
  double orders = std::numeric_limits<double>::quiet_NaN();
  bool success = false;
  double mu_min = std::numeric_limits<double>::quiet_NaN();
  double h_max = std::numeric_limits<double>::quiet_NaN();
};

inline ExperimentConfig sweep_member(const ExperimentConfig& base, SweepAxis axis, double value, std::size_t index) {
  ExperimentConfig c = base;
  switch (axis) {
    case SweepAxis::Mu: c.mu = value; break;
    case SweepAxis::H:
      c.h = value;
      c.c1.reset();
      c.c2.reset();
      c.c3.reset();
      break;
    case SweepAxis::G: c.forcing_grashof = value; break;
  }
  c.output_dir = (std::filesystem::path(base.output_dir) / (std::string(to_string(axis)) + "_" + std::to_string(index)))
                     .string();
  return c;
}

// One run per value, executed concurrently; failures are recorded per row.
inline std::vector<SweepRow> run_sweep(const ExperimentConfig& base, SweepAxis axis, const std::vector<double>& values,
                                       unsigned threads = std::thread::hardware_concurrency()) {
  for (double v : values)
    if (!std::isfinite(v) || (axis != SweepAxis::Mu && !(v > 0.0)) || (axis == SweepAxis::Mu && v < 0.0))
      throw ConfigError("sweep values must be finite and positive (mu may be 0), got " + format_double(v));
  std::vector<SweepRow> rows(values.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t k = next++; k < values.size(); k = next++) {
      SweepRow& row = rows[k];
      row.value = values[k];
      try {
        const auto cfg = sweep_member(base, axis, values[k], k);
        const auto out = run_scenario(cfg);
        row.exit_code = out.exit_code;
        if (out.summary.contains("error")) row.error = out.summary["error"].get<std::string>();
        if (out.summary.contains("l2")) {
          const auto& l2 = out.summary["l2"];
          if (l2["rate"].is_number()) row.rate = l2["rate"].get<double>();
          if (l2["r2"].is_number()) row.r2 = l2["r2"].get<double>();
          if (l2["orders"].is_number()) row.orders = l2["orders"].get<double>();
          row.success = l2["success"].get<bool>();
        }
        std::ifstream thr(std::filesystem::path(cfg.output_dir) / "thresholds.json");
        const auto tj = Json::parse(thr);
        if (tj["mu_min"].is_number()) row.mu_min = tj["mu_min"].get<double>();
        row.h_max = tj["h_max"].is_number() ? tj["h_max"].get<double>() : std::numeric_limits<double>::infinity();
      } catch (const ConfigError& e) {
        row.exit_code = exit_code::invalid_config;
        row.error = e.what();
      } catch (const std::exception& e) {
        row.exit_code = exit_code::error;
        row.error = e.what();
      }
    }
  };
  const unsigned n = std::max(1u, std::min<unsigned>(threads, static_cast<unsigned>(values.size())));
  std::vector<std::thread> pool;
  for (unsigned k = 1; k < n; ++k) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();
  return rows;
}

inline std::string sweep_csv(SweepAxis axis, const std::vector<SweepRow>& rows) {
  std::ostringstream os;
  os << to_string(axis) << ",rate,r2,orders,success,exit_code,mu_min,h_max,error\n";
  for (const auto& r : rows) {
    std::string err = r.error;
    std::replace(err.begin(), err.end(), ',', ';');
    std::replace(err.begin(), err.end(), '\n', ' ');
    os << format_double(r.value) << ',' << format_double(r.rate) << ',' << format_double(r.r2) << ','
       << format_double(r.orders) << ',' << (r.success ? 1 : 0) << ',' << r.exit_code << ','
       << format_double(r.mu_min) << ',' << format_double(r.h_max) << ',' << err << '\n';
  }
  return os.str();
}

}  // namespace mhdnudge
