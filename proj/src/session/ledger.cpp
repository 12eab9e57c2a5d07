#include "wansim/session/ledger.hpp"

#include <algorithm>

namespace wansim::session {

void DeliveryLedger::record(ByteRange r, SimTime at) {
  entries_.push_back(r);
  times_.push_back(at);
}

bool DeliveryLedger::gap_free() const {
  std::uint64_t expect = 0;
  for (const ByteRange& r : entries_) {
    if (r.begin != expect || r.end <= r.begin) return false;
    expect = r.end;
  }
  return true;
}

bool DeliveryLedger::overlap_free() const {
  std::vector<ByteRange> sorted = entries_;
  std::sort(sorted.begin(), sorted.end(), [](const ByteRange& a, const ByteRange& b) { return a.begin < b.begin; });
  for (std::size_t i = 1; i < sorted.size(); ++i) {
    if (sorted[i].begin < sorted[i - 1].end) return false;
  }
  return true;
}

std::vector<ByteRange> DeliveryLedger::merged() const {
  std::vector<ByteRange> out;
  for (const ByteRange& r : entries_) {
    if (!out.empty() && out.back().end == r.begin) {
      out.back().end = r.end;
    } else {
      out.push_back(r);
    }
  }
  return out;
}

std::uint64_t DeliveryLedger::bytes_between(SimTime from, SimTime to) const {
  std::uint64_t sum = 0;
  auto lo = std::upper_bound(times_.begin(), times_.end(), from);
  for (auto it = lo; it != times_.end() && *it <= to; ++it) {
    const ByteRange& r = entries_[static_cast<std::size_t>(it - times_.begin())];
    sum += r.end - r.begin;
  }
  return sum;
}

}  // namespace wansim::session
