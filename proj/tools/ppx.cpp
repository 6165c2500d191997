// ppx: pseudoproxy cross-validation and CPS experiment runner.

#include <exception>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>

#include <CLI11.hpp>
#include <fmt/format.h>

#include "ppx/config.hpp"
#include "ppx/field.hpp"
#include "ppx/runner.hpp"

namespace {

constexpr const char* kVersion = "ppx 1.0.0";

int print_violations(const std::vector<ppx::Violation>& violations) {
  for (const auto& v : violations) std::cerr << v.to_string() << '\n';
  return violations.empty() ? ppx::kExitOk : ppx::kExitConfig;
}

ppx::ConfigParse read_config(const std::string& path) {
  try {
    return ppx::load_config(path);
  } catch (const ppx::Error& e) {
    throw ppx::ConfigError(e.what());
  }
}

int cmd_validate(const std::string& path) {
  const auto parsed = read_config(path);
  if (parsed.ok()) {
    std::cout << path << ": ok\n";
    return ppx::kExitOk;
  }
  std::cerr << path << ": " << parsed.violations.size() << " violation(s)\n";
  return print_violations(parsed.violations);
}

int cmd_run(const std::string& path) {
  const auto parsed = read_config(path);
  if (!parsed.ok()) return print_violations(parsed.violations);
  const auto outcome = ppx::run_experiment(parsed.config);
  std::cout << fmt::format("{:<12} {:>7} {:>9} {:>9} {:>9}\n", "dataset", "blocks", "q1", "median", "q3");
  for (const auto& row : outcome.summary)
    std::cout << fmt::format("{:<12} {:>7} {:>9.4f} {:>9.4f} {:>9.4f}\n", row.dataset_label, row.n_blocks, row.q1,
                             row.median, row.q3);
  for (const auto& rec : outcome.cps)
    std::cout << fmt::format("CPS {:<12} r = {:.3f} ({} NH predictors)\n", rec.dataset_label,
                             rec.cps.correlation_with_target, rec.cps.n_predictors);
  std::cout << "outputs written to " << outcome.output_dir.string() << '\n';
  if (outcome.exit_code == ppx::kExitPartial) std::cerr << "some holdout blocks failed; see cv_diagnostics.csv\n";
  return outcome.exit_code;
}

int cmd_synth(const std::string& spec_path, const std::string& bundle) {
  std::ifstream in(spec_path);
  if (!in) throw ppx::Error("cannot read " + spec_path);
  std::stringstream buf;
  buf << in.rdbuf();
  const auto parsed = ppx::parse_synthetic_spec(buf.str());
  if (!parsed.violations.empty()) return print_violations(parsed.violations);
  const auto synth = ppx::generate_synthetic_field(parsed.spec);
  ppx::write_grid_field(synth.field, bundle);

  std::ofstream signal(ppx::bundle_prefix(bundle).string() + ".signal.csv");
  if (!signal) throw ppx::Error("cannot write signal file");
  signal << "year,signal\n";
  for (Eigen::Index t = 0; t < synth.signal.values.size(); ++t)
    signal << fmt::format("{},{:.6f}\n", synth.signal.first_year + static_cast<int>(t), synth.signal.values[t]);
  std::cout << fmt::format("wrote {} cells x {} years to {}.{{cells,data,signal}}.csv\n", synth.field.n_cells(),
                           synth.field.n_years(), ppx::bundle_prefix(bundle).string());
  return ppx::kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Pseudoproxy cross-validation and composite-plus-scale experiments"};
  app.require_subcommand(1);

  std::string config_path;
  auto* run = app.add_subcommand("run", "Run the full experiment described by a config file");
  run->add_option("config", config_path, "Config file")->required();

  auto* validate = app.add_subcommand("validate", "Check a config file without running it");
  validate->add_option("config", config_path, "Config file")->required();

  std::string spec_path;
  std::string bundle;
  auto* synth = app.add_subcommand("synth", "Write a synthetic field bundle");
  synth->add_option("spec", spec_path, "File with synthetic.* settings")->required();
  synth->add_option("-o,--output", bundle, "Bundle prefix")->required();

  app.add_subcommand("version", "Print the version");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : ppx::kExitConfig;
  }

  try {
    if (*run) return cmd_run(config_path);
    if (*validate) return cmd_validate(config_path);
    if (*synth) return cmd_synth(spec_path, bundle);
    std::cout << kVersion << '\n';
    return ppx::kExitOk;
  } catch (const ppx::ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return ppx::kExitConfig;
  } catch (const ppx::ParseError& e) {
    std::cerr << "input error: " << e.what() << '\n';
    return ppx::kExitRuntime;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return ppx::kExitRuntime;
  }
}
