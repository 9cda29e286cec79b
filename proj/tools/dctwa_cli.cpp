// dctwa_cli: run experiment configs, certify the phase-space mappings,
// compare two runs.

#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "dctwa/harness.hpp"

namespace {

int run_command(const std::string& path, std::optional<std::uint64_t> seed, std::optional<unsigned> threads,
                const std::string& output) {
  auto cfg = dctwa::harness::load_config(path);
  if (seed) cfg.seed = *seed;
  if (threads) cfg.threads = *threads;
  if (!output.empty()) cfg.output_dir = output;
  const auto r = dctwa::harness::run(cfg);
  for (const auto& o : r.outputs) {
    std::cout << o.run.label << " (" << dctwa::to_string(o.run.engine) << "): " << o.series.n_traj
              << " trajectories, " << o.wall_time << " s\n";
  }
  std::cout << "manifest: " << r.manifest_path << "\n";
  return 0;
}

int compare_command(const std::string& a, const std::string& b, double k, const std::string& report) {
  const auto r = dctwa::harness::compare(a, b, k);
  for (const auto& o : r.observables) {
    std::size_t bad = 0;
    for (bool w : o.within) bad += !w;
    std::cout << o.name << ": max |diff| " << o.max_abs_diff << ", " << bad << "/" << o.within.size()
              << " points outside " << k << " sigma\n";
  }
  if (!r.same_model) std::cout << "warning: model checksums differ\n";
  std::cout << (r.all_within ? "agree" : "disagree") << "\n";
  if (!report.empty()) {
    std::ofstream out(report);
    if (!out) throw dctwa::Error(dctwa::ErrorCode::IoError, "cannot write " + report);
    out << r.to_json().dump(2) << '\n';
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Dissipative discrete truncated Wigner simulations"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(dctwa::kVersion));

  std::optional<std::uint64_t> seed;
  std::optional<unsigned> threads;
  app.add_option("--seed", seed, "override the config seed");
  app.add_option("--threads", threads, "worker threads (results do not depend on it)")->check(CLI::PositiveNumber);

  auto* run = app.add_subcommand("run", "run a config file");
  std::string config, output;
  run->add_option("config", config, "config file")->required();
  run->add_option("-o,--output", output, "override the output directory");

  auto* verify = app.add_subcommand("verify-mappings", "certify the operator mappings, JSON report on stdout");
  int grid = 32;
  verify->add_option("--grid", grid, "points per axis of the identity grid")->check(CLI::PositiveNumber);

  auto* cmp = app.add_subcommand("compare", "k-sigma comparison of two runs (manifest[#label])");
  std::string a, b, report;
  double k = 3.0;
  cmp->add_option("a", a)->required();
  cmp->add_option("b", b)->required();
  cmp->add_option("--k", k, "tolerance in combined standard errors");
  cmp->add_option("--report", report, "write the per-point report as JSON");

  auto* show = app.add_subcommand("preset", "print a preset as a config file");
  std::string name;
  show->add_option("name", name)->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (*run) return run_command(config, seed, threads, output);
    if (*verify) {
      const auto j = dctwa::harness::verify_mappings_report(grid);
      std::cout << j.dump(2) << '\n';
      return j.at("pass").get<bool>() ? 0 : 2;
    }
    if (*cmp) return compare_command(a, b, k, report);
    if (*show) {
      std::cout << dctwa::to_config_text(dctwa::preset(name));
      return 0;
    }
  } catch (const dctwa::Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return dctwa::harness::exit_code_for(e.code());
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
  return 0;
}
