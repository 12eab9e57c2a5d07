#include "wansim/power/power.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace wansim::power {

MilliWatts watts_to_mw(double watts) {
  if (!std::isfinite(watts) || watts < 0) throw PowerError("power must be a finite non-negative number of watts");
  return static_cast<MilliWatts>(std::llround(watts * 1000.0));
}

MilliWatts PowerProfile::p_nic_mw(BitRate rate) const {
  if (nic.empty()) return 0;
  MilliWatts w = nic.front().nic_mw;
  for (const RateStep& s : nic) {
    if (s.rate <= rate) w = s.nic_mw;
  }
  return w;
}

void PowerProfile::validate() const {
  if (p_fixed_mw < 0 || p_sleep_mw < 0) throw PowerError(name + ": power must be non-negative");
  for (std::size_t i = 0; i < nic.size(); ++i) {
    if (nic[i].nic_mw < 0) throw PowerError(name + ": NIC power must be non-negative");
    if (i > 0 && nic[i].rate <= nic[i - 1].rate) throw PowerError(name + ": NIC rate ladder must be strictly ascending");
    if (i > 0 && nic[i].nic_mw < nic[i - 1].nic_mw) throw PowerError(name + ": NIC power must not fall as rate rises");
  }
  const MilliWatts min_nic = nic.empty() ? 0 : nic.front().nic_mw;
  if (p_sleep_mw > p_fixed_mw + min_nic) throw PowerError(name + ": sleep power exceeds the lowest active power");
  if (observation_window <= SimTime{}) throw PowerError(name + ": observation window must be positive");
  if (sleep_entry_gap < SimTime{}) throw PowerError(name + ": sleep entry gap must be non-negative");
}

PowerProfile parse_profile(const std::string& text) {
  PowerProfile p;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  bool have_window = false;
  while (std::getline(in, line)) {
    ++lineno;
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    std::istringstream ls(line);
    std::string key;
    if (!(ls >> key)) continue;
    auto fail = [&](const std::string& why) {
      throw PowerError("profile line " + std::to_string(lineno) + " (" + key + "): " + why);
    };
    auto number = [&] {
      double v = 0;
      if (!(ls >> v)) fail("expected a number");
      return v;
    };
    if (key == "name") {
      if (!(ls >> p.name)) fail("expected a name");
    } else if (key == "p_fixed_w") {
      p.p_fixed_mw = watts_to_mw(number());
    } else if (key == "p_sleep_w") {
      p.p_sleep_mw = watts_to_mw(number());
    } else if (key == "window_s") {
      p.observation_window = SimTime::from_seconds(number());
      have_window = true;
    } else if (key == "sleep_entry_gap_s") {
      p.sleep_entry_gap = SimTime::from_seconds(number());
    } else if (key == "nic") {
      const double rate = number();
      if (rate <= 0 || rate != std::floor(rate)) fail("rate must be a positive integer bit/s");
      p.nic.push_back({static_cast<BitRate>(rate), watts_to_mw(number())});
    } else {
      fail("unknown key");
    }
    std::string extra;
    if (ls >> extra) fail("trailing text '" + extra + "'");
  }
  if (!have_window) throw PowerError("profile: window_s is required");
  p.validate();
  return p;
}

namespace {

// Exact decimal rendering of value / 10^digits.
std::string fixed_point(std::int64_t value, int digits) {
  std::int64_t scale = 1;
  for (int i = 0; i < digits; ++i) scale *= 10;
  std::string frac = std::to_string(value % scale);
  frac.insert(0, static_cast<std::size_t>(digits) - frac.size(), '0');
  return std::to_string(value / scale) + "." + frac;
}

}  // namespace

std::string format_profile(const PowerProfile& p) {
  std::ostringstream o;
  if (!p.name.empty()) o << "name " << p.name << '\n';
  o << "p_fixed_w " << fixed_point(p.p_fixed_mw, 3) << '\n';
  o << "p_sleep_w " << fixed_point(p.p_sleep_mw, 3) << '\n';
  o << "window_s " << fixed_point(p.observation_window.us(), 6) << '\n';
  o << "sleep_entry_gap_s " << fixed_point(p.sleep_entry_gap.us(), 6) << '\n';
  for (const RateStep& s : p.nic) o << "nic " << s.rate << ' ' << fixed_point(s.nic_mw, 3) << '\n';
  return o.str();
}

EnergyReport energy_for_transfer(std::uint64_t bytes, BitRate rate, const PowerProfile& profile) {
  if (rate == 0) throw PowerError("rate must be positive");
  profile.validate();
  const SimTime t = serialization_time(bytes, rate);
  if (t > profile.observation_window) throw PowerError("transfer does not fit in the observation window");
  EnergyReport r;
  r.transfer_time = t;
  r.window = profile.observation_window;
  r.active_nj = t.us() * profile.p_active_mw(rate);
  r.sleep_nj = (profile.observation_window - t).us() * profile.p_sleep_mw;
  r.total_nj = r.active_nj + r.sleep_nj;
  return r;
}

RateComparison compare_rates(std::uint64_t bytes, BitRate rate_low, BitRate rate_high, const PowerProfile& profile) {
  if (rate_low >= rate_high) throw PowerError("rate_low must be below rate_high");
  RateComparison c;
  c.low = energy_for_transfer(bytes, rate_low, profile);
  c.high = energy_for_transfer(bytes, rate_high, profile);
  c.t_low = c.low.transfer_time;
  c.t_high = c.high.transfer_time;
  c.p_low = profile.p_active_mw(rate_low);
  c.p_high = profile.p_active_mw(rate_high);
  c.winner = c.high.total_nj <= c.low.total_nj ? Winner::High : Winner::Low;
  c.ratio = c.low.total_nj == 0 ? (c.high.total_nj == 0 ? 1.0 : INFINITY)
                                : static_cast<double>(c.high.total_nj) / static_cast<double>(c.low.total_nj);
  return c;
}

FleetReport energy_for_scenario(const std::vector<DeviceActivity>& devices,
                                const std::map<std::string, PowerProfile>& profiles, Interval window) {
  if (window.end < window.begin) throw PowerError("observation window ends before it begins");
  FleetReport fleet;
  for (const DeviceActivity& d : devices) {
    auto it = profiles.find(d.profile);
    if (it == profiles.end()) throw PowerError("no power profile '" + d.profile + "' for device " + d.device);
    const PowerProfile& p = it->second;
    p.validate();
    const IntervalSet awake = d.busy.clip(window).coalesce(p.sleep_entry_gap);
    DeviceEnergy e;
    e.device = d.device;
    e.awake = awake.total();
    e.active_nj = e.awake.us() * p.p_active_mw(d.nic_rate);
    e.sleep_nj = (window.length() - e.awake).us() * p.p_sleep_mw;
    e.total_nj = e.active_nj + e.sleep_nj;
    fleet.total_nj += e.total_nj;
    fleet.devices.push_back(std::move(e));
  }
  return fleet;
}

IntervalSet node_sleep(const std::vector<IntervalSet>& link_busy, Interval window) {
  IntervalSet busy;
  for (const IntervalSet& b : link_busy) busy = busy.unite(b);
  return busy.complement(window);
}

}  // namespace wansim::power
