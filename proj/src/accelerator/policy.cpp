#include "wansim/accelerator/policy.hpp"

#include "wansim/accelerator/chunk_store.hpp"

namespace wansim::accel {

void AcceleratorPolicy::validate() const {
  if (rtt_threshold < SimTime{}) throw AccelError("rtt threshold must be non-negative");
  if (hysteresis < SimTime{} || hysteresis > rtt_threshold) throw AccelError("hysteresis must lie in [0, threshold]");
  if (wan_window_bytes == 0) throw AccelError("WAN window must be positive");
  if (wan_rate_cap && *wan_rate_cap == 0) throw AccelError("WAN rate cap must be positive");
}

std::string_view to_string(Decision d) {
  switch (d) {
    case Decision::Insert: return "Insert";
    case Decision::Remove: return "Remove";
    case Decision::Hold: return "Hold";
  }
  return "?";
}

Decision evaluate_policy(const AcceleratorPolicy& p, SimTime measured_rtt, bool currently_inserted) {
  if (!currently_inserted) return measured_rtt >= p.rtt_threshold ? Decision::Insert : Decision::Hold;
  return measured_rtt <= p.rtt_threshold - p.hysteresis ? Decision::Remove : Decision::Hold;
}

}  // namespace wansim::accel
