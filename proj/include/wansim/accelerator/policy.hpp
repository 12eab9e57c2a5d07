#pragma once

#include <cstdint>
#include <optional>
#include <string_view>

#include "wansim/simcore/time.hpp"

namespace wansim::accel {

struct AcceleratorPolicy {
  SimTime rtt_threshold = SimTime::millis(100);
  SimTime hysteresis = SimTime::millis(20);
  std::uint64_t wan_window_bytes = 1024 * 1024;
  std::optional<BitRate> wan_rate_cap;

  void validate() const;
};

enum class Decision : std::uint8_t { Insert, Remove, Hold };
std::string_view to_string(Decision d);

// Insert once rtt >= threshold; remove only when rtt <= threshold - hysteresis.
Decision evaluate_policy(const AcceleratorPolicy& p, SimTime measured_rtt, bool currently_inserted);

}  // namespace wansim::accel
