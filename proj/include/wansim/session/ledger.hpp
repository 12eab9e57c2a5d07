#pragma once

#include <cstdint>
#include <vector>

#include "wansim/simcore/time.hpp"

namespace wansim::session {

struct ByteRange {
  std::uint64_t begin = 0;
  std::uint64_t end = 0;
  bool operator==(const ByteRange&) const = default;
};

// Append-only record of the session byte ranges handed to the application,
// in delivery order. Kept unmerged so tests can see every hand-off.
class DeliveryLedger {
 public:
  void record(ByteRange r, SimTime at);

  const std::vector<ByteRange>& entries() const { return entries_; }
  const std::vector<SimTime>& times() const { return times_; }
  std::uint64_t delivered() const { return entries_.empty() ? 0 : entries_.back().end; }

  // Entries start at 0 and each begins where the previous ended.
  bool gap_free() const;
  // No byte handed over twice.
  bool overlap_free() const;
  // Adjacent entries merged; a single range for a clean stream.
  std::vector<ByteRange> merged() const;

  // Bytes delivered in (from, to].
  std::uint64_t bytes_between(SimTime from, SimTime to) const;

 private:
  std::vector<ByteRange> entries_;
  std::vector<SimTime> times_;
};

}  // namespace wansim::session
