// Command-line front end: run, sweep, verify-interpolant, determining.

#include <mhdnudge/mhdnudge.hpp>

#include <CLI11.hpp>

#include <iostream>

namespace {

using namespace mhdnudge;

struct Common {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> output;
};

ExperimentConfig load(const Common& o) {
  ExperimentConfig c = load_config(o.config);
  if (o.seed) c.seed = *o.seed;
  if (o.output) c.output_dir = *o.output;
  return c;
}

void print_checks(const ScenarioOutcome& out) {
  for (const auto& ch : out.checks)
    std::cout << (ch.passed ? "PASS " : "FAIL ") << ch.name << ": " << ch.detail << '\n';
  if (out.summary.contains("error")) std::cout << "ERROR " << out.summary["error"].get<std::string>() << '\n';
  std::cout << "run directory: " << out.directory.string() << " (exit " << out.exit_code << ")\n";
}

int run(const Common& o, std::optional<Scenario> force) {
  ExperimentConfig c = load(o);
  if (force) c.scenario = *force;
  const auto out = run_scenario(c);
  print_checks(out);
  return out.exit_code;
}

int sweep(const Common& o, const std::string& axis_name, const std::vector<double>& values, unsigned threads) {
  const ExperimentConfig c = load(o);
  const SweepAxis axis = parse_axis(axis_name);
  const auto rows = run_sweep(c, axis, values, threads);
  std::filesystem::create_directories(c.output_dir);
  const auto table = sweep_csv(axis, rows);
  write_text(std::filesystem::path(c.output_dir) / "sweep.csv", table);
  std::cout << table;
  return exit_code::ok;
}

int verify(const Common& o) {
  const ExperimentConfig c = load(o);
  const auto v = verify_interpolant(c);
  const std::string text = v.report.dump(2) + "\n";
  std::filesystem::create_directories(c.output_dir);
  write_text(std::filesystem::path(c.output_dir) / "interpolant.json", text);
  std::cout << text;
  return v.fresh_violations == 0 ? exit_code::ok : exit_code::check_failed;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Nudging data assimilation for 2D periodic MHD in Elsasser variables"};
  app.require_subcommand(1);
  Common opts;
  auto add_common = [&](CLI::App* sub) {
    sub->add_option("config", opts.config, "experiment config (flat YAML)")->required()->check(CLI::ExistingFile);
    sub->add_option("--seed", opts.seed, "override the config seed");
    sub->add_option("--output", opts.output, "override the output directory");
  };
  auto* run_cmd = app.add_subcommand("run", "run the configured scenario");
  add_common(run_cmd);
  auto* det_cmd = app.add_subcommand("determining", "run the determining-interpolant experiment");
  add_common(det_cmd);
  auto* ver_cmd = app.add_subcommand("verify-interpolant", "estimate and check interpolant constants");
  add_common(ver_cmd);
  auto* sweep_cmd = app.add_subcommand("sweep", "run one scenario per parameter value");
  add_common(sweep_cmd);
  std::string axis;
  std::vector<double> values;
  unsigned threads = std::max(1u, std::thread::hardware_concurrency());
  sweep_cmd->add_option("--axis", axis, "mu, h or G")->required();
  sweep_cmd->add_option("--values", values, "parameter values")->required()->delimiter(',');
  sweep_cmd->add_option("--threads", threads, "concurrent runs");

  CLI11_PARSE(app, argc, argv);
  try {
    if (*run_cmd) return run(opts, std::nullopt);
    if (*det_cmd) return run(opts, Scenario::DeterminingInterpolant);
    if (*ver_cmd) return verify(opts);
    if (*sweep_cmd) return sweep(opts, axis, values, threads);
  } catch (const ConfigError& e) {
    std::cerr << "invalid config: " << e.what() << '\n';
    return exit_code::invalid_config;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return exit_code::error;
  }
  return exit_code::error;
}
