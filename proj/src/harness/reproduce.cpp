#include "wansim/harness/reproduce.hpp"

#include <cmath>
#include <cstdio>

#include "wansim/harness/scenario.hpp"
#include "wansim/power/power.hpp"

namespace wansim::harness {

namespace {

std::string fmt(const char* f, double a) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, a);
  return buf;
}

std::string pass_word(bool ok) { return ok ? "PASS" : "FAIL"; }

ScenarioConfig load_preset(const std::filesystem::path& presets, const char* file, std::optional<std::uint64_t> seed) {
  ScenarioConfig cfg = load_config(presets / file);
  if (seed) cfg.seed = *seed;
  return cfg;
}

ReproReport table1(const std::filesystem::path& presets, std::optional<std::uint64_t> seed) {
  const ScenarioConfig cfg = load_preset(presets, "table1.yaml", seed);
  ReproReport rep;
  rep.figure = "table1";
  rep.rows = run(cfg);
  rep.csv = format_csv(rep.rows);

  rep.table = "  d [ms]   T measured   T reference   |diff|   verdict\n";
  bool monotone = true;
  bool ceiling = true;
  for (std::size_t i = 0; i < rep.rows.size(); ++i) {
    const MetricsRow& r = rep.rows[i];
    if (i > 0 && !(r.normalized_T < rep.rows[i - 1].normalized_T)) monotone = false;
    if (!(r.normalized_T <= kTable1Ceiling)) ceiling = false;
    std::optional<double> ref;
    for (const auto& p : kTable1Reference) {
      if (p.d_ms == r.d_ms) ref = p.normalized_T;
    }
    rep.table += fmt("%8.0f", r.d_ms) + fmt("   %10.4f", r.normalized_T);
    if (ref) {
      const double diff = std::abs(r.normalized_T - *ref);
      const bool ok = diff <= kTable1Tolerance;
      rep.table += fmt("   %11.2f", *ref) + fmt("   %6.4f", diff) + "   " + pass_word(ok) + "\n";
      rep.verdicts.push_back({"T(" + fmt("%.0f", r.d_ms) + " ms) within " + fmt("%.2f", kTable1Tolerance) +
                                  " of " + fmt("%.2f", *ref),
                              ok, fmt("%.4f", r.normalized_T)});
    } else {
      rep.table += "             -        -   -\n";
    }
  }
  rep.verdicts.insert(rep.verdicts.begin(),
                      {{"normalized T strictly decreasing in d", monotone, ""},
                       {"normalized T <= " + fmt("%.1f", kTable1Ceiling) + " at every d", ceiling, ""}});
  return rep;
}

ReproReport fig5(const std::filesystem::path& presets, std::optional<std::uint64_t> seed) {
  const ScenarioConfig cfg = load_preset(presets, "fig5.yaml", seed);
  ReproReport rep;
  rep.figure = "fig5";
  rep.table = "  d [ms]   T with [s]   T without [s]   time ratio   energy ratio\n";
  for (double d : sweep_points(cfg)) {
    const PointResult p = run_point(cfg, d);
    rep.rows.push_back(p.row);
    const double without = p.baseline && p.baseline->completion_time() ? p.baseline->completion_time()->sec() : NAN;
    const double eratio = p.baseline_energy_j > 0 ? p.row.energy_j / p.baseline_energy_j : NAN;
    rep.table += fmt("%8.0f", d) + fmt("   %10.2f", p.row.completion_time_s) + fmt("   %13.2f", without) +
                 fmt("   %10.4f", p.row.normalized_T) + fmt("   %12.4f", eratio) + "\n";
    if (d == 500) {
      const bool ok = std::abs(p.row.normalized_T - kFig5Target) <= kFig5Tolerance;
      rep.verdicts.push_back({"time ratio at 500 ms within " + fmt("%.2f", kFig5Tolerance) + " of " +
                                  fmt("%.2f", kFig5Target),
                              ok, fmt("%.4f", p.row.normalized_T)});
      rep.verdicts.push_back({"energy ratio at 500 ms near " + fmt("%.2f", kFig5Target), std::abs(eratio - kFig5Target) <= kFig5Tolerance,
                              fmt("%.4f", eratio)});
    }
  }
  if (rep.verdicts.empty()) rep.verdicts.push_back({"preset sweeps d = 500 ms", false, ""});
  rep.csv = format_csv(rep.rows);
  return rep;
}

ReproReport fig6(const std::filesystem::path& presets, std::optional<std::uint64_t> seed) {
  const ScenarioConfig cfg = load_preset(presets, "fig6.yaml", seed);
  ReproReport rep;
  rep.figure = "fig6";
  if (!cfg.compare.present) throw ConfigError("fig6.yaml", 0, "compare", "required for this figure");
  const power::PowerProfile& prof = cfg.power.profiles.at(cfg.compare.profile);
  const power::RateComparison c = power::compare_rates(cfg.compare.bytes, cfg.compare.rate_low, cfg.compare.rate_high, prof);

  rep.csv = "profile,rate_bps,transfer_time_s,active_j,sleep_j,total_j\n";
  rep.table = "  rate [Mbit/s]   transfer [s]   active [J]   sleep [J]   total [J]\n";
  for (const auto& [rate, e] : {std::pair{cfg.compare.rate_low, c.low}, std::pair{cfg.compare.rate_high, c.high}}) {
    rep.csv += prof.name + "," + std::to_string(rate) + "," + format_double(e.transfer_time_s()) + "," +
               format_double(e.active_j()) + "," + format_double(e.sleep_j()) + "," + format_double(e.total_j()) + "\n";
    rep.table += fmt("%15.0f", static_cast<double>(rate) / 1e6) + fmt("   %12.3f", e.transfer_time_s()) +
                 fmt("   %10.3f", e.active_j()) + fmt("   %9.3f", e.sleep_j()) + fmt("   %9.3f", e.total_j()) + "\n";
  }
  rep.table += "  high/low energy ratio " + fmt("%.4f", c.ratio) + ", winner " +
               (c.winner == power::Winner::High ? "high rate" : "low rate") + "\n";
  rep.verdicts.push_back({"energy ratio in [" + fmt("%.2f", kFig6Low) + ", " + fmt("%.2f", kFig6High) + "]",
                          c.ratio >= kFig6Low && c.ratio <= kFig6High, fmt("%.4f", c.ratio)});
  return rep;
}

ReproReport slowdown(const std::filesystem::path& presets, std::optional<std::uint64_t> seed) {
  const ScenarioConfig cfg = load_preset(presets, "slowdown.yaml", seed);
  ReproReport rep;
  rep.figure = "slowdown";
  rep.table = "  accelerator   pre [Mbit/s]   post [Mbit/s]   post/pre\n";
  for (bool accelerated : {false, true}) {
    ScenarioConfig c = cfg;
    c.accelerator.enabled = accelerated;
    c.normalize = Normalize::None;
    c.name = cfg.name + (accelerated ? "-accel" : "-plain");
    const PointResult p = run_point(c, c.topology.delay_ms);
    rep.rows.push_back(p.row);
    const double ratio = p.row.throughput_post_bps / p.row.throughput_pre_bps;
    rep.table += std::string(accelerated ? "          on" : "         off") +
                 fmt("   %12.3f", p.row.throughput_pre_bps / 1e6) + fmt("   %13.3f", p.row.throughput_post_bps / 1e6) +
                 fmt("   %8.4f", ratio) + "\n";
    if (accelerated) {
      rep.verdicts.push_back({"with accelerator, post within 10% of pre", std::abs(ratio - 1.0) <= kAcceleratedRelTolerance,
                              fmt("%.4f", ratio)});
    } else {
      rep.verdicts.push_back({"without accelerator, post is 1/5 of pre within 20%",
                              std::abs(ratio - kSlowdownTarget) <= kSlowdownTarget * kSlowdownRelTolerance,
                              fmt("%.4f", ratio)});
    }
  }
  rep.csv = format_csv(rep.rows);
  return rep;
}

}  // namespace

std::optional<Figure> parse_figure(std::string_view name) {
  if (name == "table1") return Figure::Table1;
  if (name == "fig5") return Figure::Fig5;
  if (name == "fig6") return Figure::Fig6;
  if (name == "slowdown") return Figure::Slowdown;
  return std::nullopt;
}

std::string_view to_string(Figure f) {
  switch (f) {
    case Figure::Table1: return "table1";
    case Figure::Fig5: return "fig5";
    case Figure::Fig6: return "fig6";
    case Figure::Slowdown: return "slowdown";
  }
  return "?";
}

bool ReproReport::passed() const {
  for (const Verdict& v : verdicts) {
    if (!v.pass) return false;
  }
  return true;
}

ReproReport reproduce(Figure f, std::optional<std::uint64_t> seed, const std::filesystem::path& presets) {
  switch (f) {
    case Figure::Table1: return table1(presets, seed);
    case Figure::Fig5: return fig5(presets, seed);
    case Figure::Fig6: return fig6(presets, seed);
    case Figure::Slowdown: return slowdown(presets, seed);
  }
  return {};
}

}  // namespace wansim::harness
