#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "wansim/simcore/interval_set.hpp"
#include "wansim/simcore/time.hpp"

namespace wansim::power {

// Power is held in integer milliwatts and time in microseconds, so energy in
// nanojoules (mW x us) is exact.
using MilliWatts = std::int64_t;
using NanoJoules = std::int64_t;

class PowerError : public SimError {
 public:
  using SimError::SimError;
};

MilliWatts watts_to_mw(double watts);
inline double nj_to_j(NanoJoules nj) { return static_cast<double>(nj) * 1e-9; }

struct RateStep {
  BitRate rate = 0;   // tier applies to link rates >= this
  MilliWatts nic_mw = 0;
};

struct PowerProfile {
  std::string name;
  MilliWatts p_fixed_mw = 0;
  MilliWatts p_sleep_mw = 0;
  // Ascending rate ladder; p_nic is a step function over it.
  std::vector<RateStep> nic;
  SimTime observation_window;
  // Idle gaps shorter than this keep the device awake.
  SimTime sleep_entry_gap = SimTime::seconds(30);

  // Tier of the highest step not above `rate`; rates below the ladder use
  // the lowest tier.
  MilliWatts p_nic_mw(BitRate rate) const;
  MilliWatts p_active_mw(BitRate rate) const { return p_fixed_mw + p_nic_mw(rate); }
  void validate() const;
};

// Text form: one `key value...` per line, '#' comments.
//   name <word>
//   p_fixed_w <watts>
//   p_sleep_w <watts>
//   window_s <seconds>
//   sleep_entry_gap_s <seconds>
//   nic <rate_bps> <watts>      (repeatable)
PowerProfile parse_profile(const std::string& text);
std::string format_profile(const PowerProfile& p);

struct EnergyReport {
  SimTime transfer_time;
  SimTime window;
  NanoJoules active_nj = 0;
  NanoJoules sleep_nj = 0;
  NanoJoules total_nj = 0;

  double transfer_time_s() const { return transfer_time.sec(); }
  double active_j() const { return nj_to_j(active_nj); }
  double sleep_j() const { return nj_to_j(sleep_nj); }
  double total_j() const { return nj_to_j(total_nj); }
};

// T = ceil(bytes * 8 / rate) in microseconds;
// total = T * (p_fixed + p_nic(rate)) + (window - T) * p_sleep.
EnergyReport energy_for_transfer(std::uint64_t bytes, BitRate rate, const PowerProfile& profile);

enum class Winner : std::uint8_t { High, Low };

struct RateComparison {
  Winner winner = Winner::High;
  double ratio = 0;  // E_high / E_low
  EnergyReport low;
  EnergyReport high;
  SimTime t_low, t_high;
  MilliWatts p_low = 0, p_high = 0;
};

// Ties go to the high rate, which leaves more time for sleep.
RateComparison compare_rates(std::uint64_t bytes, BitRate rate_low, BitRate rate_high, const PowerProfile& profile);

struct DeviceActivity {
  std::string device;
  std::string profile;  // key into the profile map
  IntervalSet busy;
  BitRate nic_rate = 0;
};

struct DeviceEnergy {
  std::string device;
  SimTime awake;
  NanoJoules active_nj = 0;
  NanoJoules sleep_nj = 0;
  NanoJoules total_nj = 0;
};

struct FleetReport {
  std::vector<DeviceEnergy> devices;
  NanoJoules total_nj = 0;
  double total_j() const { return nj_to_j(total_nj); }
};

// Awake time is the busy set inside `window` with gaps below the profile's
// sleep_entry_gap closed; the rest of the window is spent asleep.
FleetReport energy_for_scenario(const std::vector<DeviceActivity>& devices,
                                const std::map<std::string, PowerProfile>& profiles, Interval window);

// A node may sleep only while every one of its links is idle.
IntervalSet node_sleep(const std::vector<IntervalSet>& link_busy, Interval window);

}  // namespace wansim::power
