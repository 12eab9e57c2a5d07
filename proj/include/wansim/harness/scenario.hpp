#pragma once

#include <optional>
#include <string>
#include <vector>

#include "wansim/harness/config.hpp"
#include "wansim/harness/metrics.hpp"
#include "wansim/power/power.hpp"
#include "wansim/simcore/interval_set.hpp"

namespace wansim::harness {

// Raw results of one simulation; no baseline involved.
struct RunOutcome {
  std::optional<SimTime> first_send;
  std::optional<SimTime> completed;
  SimTime ended;  // engine clock when the run stopped
  std::optional<SimTime> handover_started;
  std::optional<SimTime> handover_switched;
  double throughput_pre_bps = 0;
  double throughput_post_bps = 0;
  std::uint64_t wan_bytes = 0;
  bool accelerator_inserted = false;
  std::uint64_t events = 0;
  // Per configured device, busy intervals and NIC rate.
  std::vector<power::DeviceActivity> activity;

  std::optional<SimTime> completion_time() const;
};

// The delay d applied to the new-host path (or to the only path when the
// session starts there).
RunOutcome simulate(const ScenarioConfig& cfg, double d_ms);

// Fleet energy over `length` from the first send; zero without devices.
double fleet_energy_j(const ScenarioConfig& cfg, const RunOutcome& run, SimTime length);

// The configuration of the baseline run that normalizes `cfg`, or nullopt
// when normalization is off.
std::optional<ScenarioConfig> baseline_config(const ScenarioConfig& cfg);

struct PointResult {
  MetricsRow row;
  RunOutcome run;
  std::optional<RunOutcome> baseline;
  // Baseline fleet energy over the same window as the row's energy.
  double baseline_energy_j = 0;
};

// One sweep point: the scenario and, when configured, its baseline. Energy of
// both uses a common window as long as the slower of the two transfers.
PointResult run_point(const ScenarioConfig& cfg, double d_ms);

// Sweep delays, or the single configured delay without a sweep section.
std::vector<double> sweep_points(const ScenarioConfig& cfg);
// One row per sweep point, in sweep order.
std::vector<MetricsRow> run(const ScenarioConfig& cfg);

std::string scenario_id(const ScenarioConfig& cfg, double d_ms);

}  // namespace wansim::harness
