#pragma once

#include <vector>

#include "wansim/simcore/time.hpp"

namespace wansim {

// Half-open [begin, end) span of simulated time.
struct Interval {
  SimTime begin;
  SimTime end;

  SimTime length() const { return end - begin; }
  bool operator==(const Interval&) const = default;
};

// Normalized set of disjoint, non-adjacent, non-empty intervals in ascending
// order.
class IntervalSet {
 public:
  IntervalSet() = default;
  explicit IntervalSet(std::vector<Interval> spans);

  void add(Interval iv);
  const std::vector<Interval>& spans() const { return spans_; }
  bool empty() const { return spans_.empty(); }
  SimTime total() const;
  bool contains(SimTime t) const;

  IntervalSet unite(const IntervalSet& other) const;
  IntervalSet intersect(const IntervalSet& other) const;
  // Complement within [window.begin, window.end).
  IntervalSet complement(Interval window) const;
  IntervalSet clip(Interval window) const;
  // Closes gaps shorter than `gap` (idle periods too short to enter sleep).
  IntervalSet coalesce(SimTime gap) const;

  bool operator==(const IntervalSet&) const = default;

 private:
  void normalize();
  std::vector<Interval> spans_;
};

}  // namespace wansim
