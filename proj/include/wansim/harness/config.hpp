#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "wansim/accelerator/policy.hpp"
#include "wansim/power/power.hpp"
#include "wansim/simcore/time.hpp"

namespace wansim::harness {

// Validation failure, formatted as "<source>:<line>: <field>: <why>".
class ConfigError : public SimError {
 public:
  ConfigError(const std::string& source, int line, const std::string& field, const std::string& why);
  const std::string& field() const { return field_; }
  int line() const { return line_; }

 private:
  std::string field_;
  int line_ = 0;
};

// Whether the swept delay d is the one-way client to new-host delay or the
// round trip.
enum class DelayMeaning { OneWay, RoundTrip };
// Baseline for normalized_T.
enum class Normalize { AcceleratorOff, NoMigration, None };
enum class WorkloadStart { AtOpen, AfterHandover };
// Which host the session starts on.
enum class StartPath { Pre, Post };

// Node names of the testbed built for every scenario, indexed by node id.
inline constexpr std::string_view kTestbedNodes[] = {"client",   "accel_near", "emulator",
                                                     "server_a", "accel_far",  "server_b"};

// client ── accel_near ── emulator ── server_a
//   (two links)                  └── accel_far ── server_b
struct TopologySection {
  BitRate lan_rate = 100'000'000;
  SimTime lan_delay = SimTime::micros(50);
  BitRate emulator_rate = 100'000'000;
  // Round trip between client and the original host.
  SimTime baseline_rtt = SimTime::millis(10);
  double delay_ms = 500;  // d
  DelayMeaning delay_meaning = DelayMeaning::OneWay;
};

struct TransportSection {
  std::uint32_t mss = 1460;
  std::uint32_t header_bytes = 40;
  std::uint64_t rwnd_bytes = 64 * 1024;
  std::uint32_t initial_cwnd_segments = 2;
};

struct SessionSection {
  StartPath path = StartPath::Pre;
  std::uint32_t record_payload = 1444;
  std::uint64_t sndbuf_bytes = 256 * 1024;
  std::uint32_t sndbuf_windows = 4;
};

struct WorkloadSection {
  std::uint64_t bytes = 50ULL * 1024 * 1024;
  std::optional<BitRate> app_rate;
  WorkloadStart start = WorkloadStart::AtOpen;
};

struct MigrationSection {
  bool enabled = false;
  SimTime start_at = SimTime::seconds(1);
  SimTime duration = SimTime::seconds(10);
  std::optional<SimTime> announce_lead;
  SimTime notify_lag;
  SimTime downtime;
};

struct AcceleratorSection {
  bool enabled = false;
  accel::AcceleratorPolicy policy;
  std::uint64_t lan_window_bytes = 1024 * 1024;
  std::uint64_t store_capacity_bytes = 4ULL << 30;
  double redundancy = 0.0;
  double compressibility = 1.0;
};

struct PowerSection {
  std::map<std::string, power::PowerProfile> profiles;
  // Topology node name to profile name.
  std::map<std::string, std::string> devices;
};

struct MeasureSection {
  // Zero runs until the workload completes.
  SimTime stop_at;
  // Guards against runs that never finish.
  SimTime horizon = SimTime::seconds(36'000);
  SimTime pre_settle;
  SimTime post_settle;
};

struct SweepSection {
  bool present = false;
  std::vector<double> delays_ms;
};

// Energy-only comparison of one transfer at two link rates.
struct CompareSection {
  bool present = false;
  std::uint64_t bytes = 0;
  BitRate rate_low = 0;
  BitRate rate_high = 0;
  std::string profile;
};

struct ScenarioConfig {
  std::string name = "scenario";
  std::uint64_t seed = 1;
  TopologySection topology;
  TransportSection transport;
  SessionSection session;
  WorkloadSection workload;
  MigrationSection migration;
  AcceleratorSection accelerator;
  PowerSection power;
  Normalize normalize = Normalize::AcceleratorOff;
  MeasureSection measure;
  SweepSection sweep;
  CompareSection compare;

  // Cross-field checks; throws ConfigError with line 0.
  void validate(const std::string& source = "<config>") const;
};

// `source` names the text in diagnostics; relative profile files resolve
// against `base_dir`.
ScenarioConfig parse_config(const std::string& text, const std::string& source = "<config>",
                            const std::filesystem::path& base_dir = ".");
ScenarioConfig load_config(const std::filesystem::path& file);

// Directory holding the shipped presets.
std::filesystem::path preset_dir();

std::string_view to_string(Normalize n);

}  // namespace wansim::harness
