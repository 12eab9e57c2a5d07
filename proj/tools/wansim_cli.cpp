#include <CLI11.hpp>

#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>

#include "wansim/harness/reproduce.hpp"
#include "wansim/harness/scenario.hpp"

using namespace wansim;
using namespace wansim::harness;

namespace {

std::vector<double> parse_axis(const std::string& spec) {
  const auto eq = spec.find('=');
  if (eq == std::string::npos || spec.substr(0, eq) != "delay") {
    throw CLI::ValidationError("--axis", "expected delay=<ms>,<ms>,...");
  }
  std::vector<double> values;
  std::stringstream list(spec.substr(eq + 1));
  std::string item;
  while (std::getline(list, item, ',')) {
    if (item.empty()) continue;
    std::size_t used = 0;
    double v = 0;
    try {
      v = std::stod(item, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used != item.size() || !(v > 0 && v <= 1e5)) {
      throw CLI::ValidationError("--axis", "bad delay '" + item + "'; expected a number in (0, 100000]");
    }
    values.push_back(v);
  }
  return values;
}

void write_rows(const std::vector<MetricsRow>& rows, const std::string& out) {
  if (out.empty() || out == "-") {
    emit_csv(rows, std::cout);
  } else {
    emit_csv(rows, std::filesystem::path(out));
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Session handover and WAN accelerator simulator"};
  app.require_subcommand(1);

  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;

  auto* run_cmd = app.add_subcommand("run", "Run a scenario file and write its metrics as CSV");
  run_cmd->add_option("--config", config, "Scenario file")->required()->check(CLI::ExistingFile);
  run_cmd->add_option("--seed", seed, "Override the scenario seed");
  run_cmd->add_option("--out", out, "CSV destination, '-' for stdout")->default_val("-");

  std::string axis;
  auto* sweep_cmd = app.add_subcommand("sweep", "Run a scenario over a list of delays");
  sweep_cmd->add_option("--config", config, "Scenario file")->required()->check(CLI::ExistingFile);
  sweep_cmd->add_option("--axis", axis, "delay=<ms>,<ms>,...")->required();
  sweep_cmd->add_option("--seed", seed, "Override the scenario seed");
  sweep_cmd->add_option("--out", out, "CSV destination, '-' for stdout")->default_val("-");

  std::string figure;
  bool strict = false;
  std::string repro_out;
  std::string presets = preset_dir().string();
  auto* repro_cmd = app.add_subcommand("reproduce", "Run a shipped preset and compare it with reference values");
  repro_cmd->add_option("figure", figure, "table1, fig5, fig6 or slowdown")
      ->required()
      ->check(CLI::IsMember({"table1", "fig5", "fig6", "slowdown"}));
  repro_cmd->add_flag("--strict", strict, "Exit nonzero when a tolerance check fails");
  repro_cmd->add_option("--seed", seed, "Override the preset seed");
  repro_cmd->add_option("--out", repro_out, "Also write the CSV here, '-' for stdout");
  repro_cmd->add_option("--presets", presets, "Preset directory")->check(CLI::ExistingDirectory);

  CLI11_PARSE(app, argc, argv);

  try {
    if (run_cmd->parsed() || sweep_cmd->parsed()) {
      ScenarioConfig cfg = load_config(config);
      if (seed) cfg.seed = *seed;
      if (sweep_cmd->parsed()) {
        cfg.sweep.present = true;
        cfg.sweep.delays_ms = parse_axis(axis);
      }
      write_rows(run(cfg), out);
      return 0;
    }
    const ReproReport rep = reproduce(*parse_figure(figure), seed, presets);
    std::cout << rep.figure << "\n" << rep.table;
    for (const Verdict& v : rep.verdicts) {
      std::cout << (v.pass ? "PASS  " : "FAIL  ") << v.check;
      if (!v.detail.empty()) std::cout << " (measured " << v.detail << ")";
      std::cout << "\n";
    }
    if (repro_out == "-") {
      std::cout << rep.csv;
    } else if (!repro_out.empty()) {
      std::ofstream f(repro_out, std::ios::binary | std::ios::trunc);
      if (!(f << rep.csv)) throw CsvError("cannot write " + repro_out);
    }
    return strict && !rep.passed() ? 3 : 0;
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const CLI::Error& e) {
    return app.exit(e);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
