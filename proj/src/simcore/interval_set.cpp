#include "wansim/simcore/interval_set.hpp"

#include <algorithm>

namespace wansim {

IntervalSet::IntervalSet(std::vector<Interval> spans) : spans_(std::move(spans)) { normalize(); }

void IntervalSet::normalize() {
  std::erase_if(spans_, [](const Interval& iv) { return iv.end <= iv.begin; });
  std::sort(spans_.begin(), spans_.end(),
            [](const Interval& a, const Interval& b) { return a.begin < b.begin; });
  std::vector<Interval> merged;
  merged.reserve(spans_.size());
  for (const Interval& iv : spans_) {
    if (!merged.empty() && iv.begin <= merged.back().end) {
      merged.back().end = std::max(merged.back().end, iv.end);
    } else {
      merged.push_back(iv);
    }
  }
  spans_ = std::move(merged);
}

void IntervalSet::add(Interval iv) {
  if (iv.end <= iv.begin) return;
  if (spans_.empty() || iv.begin > spans_.back().end) {
    spans_.push_back(iv);
    return;
  }
  if (iv.begin >= spans_.back().begin) {
    spans_.back().end = std::max(spans_.back().end, iv.end);
    return;
  }
  spans_.push_back(iv);
  normalize();
}

SimTime IntervalSet::total() const {
  SimTime sum;
  for (const Interval& iv : spans_) sum += iv.length();
  return sum;
}

bool IntervalSet::contains(SimTime t) const {
  auto it = std::upper_bound(spans_.begin(), spans_.end(), t,
                             [](SimTime v, const Interval& iv) { return v < iv.begin; });
  return it != spans_.begin() && t < std::prev(it)->end;
}

IntervalSet IntervalSet::unite(const IntervalSet& other) const {
  std::vector<Interval> all = spans_;
  all.insert(all.end(), other.spans_.begin(), other.spans_.end());
  return IntervalSet(std::move(all));
}

IntervalSet IntervalSet::intersect(const IntervalSet& other) const {
  std::vector<Interval> out;
  std::size_t i = 0, j = 0;
  while (i < spans_.size() && j < other.spans_.size()) {
    const SimTime lo = std::max(spans_[i].begin, other.spans_[j].begin);
    const SimTime hi = std::min(spans_[i].end, other.spans_[j].end);
    if (lo < hi) out.push_back({lo, hi});
    if (spans_[i].end < other.spans_[j].end) {
      ++i;
    } else {
      ++j;
    }
  }
  return IntervalSet(std::move(out));
}

IntervalSet IntervalSet::complement(Interval window) const {
  std::vector<Interval> out;
  SimTime cursor = window.begin;
  for (const Interval& iv : spans_) {
    if (iv.end <= cursor) continue;
    if (iv.begin >= window.end) break;
    if (iv.begin > cursor) out.push_back({cursor, iv.begin});
    cursor = std::max(cursor, iv.end);
  }
  if (cursor < window.end) out.push_back({cursor, window.end});
  return IntervalSet(std::move(out));
}

IntervalSet IntervalSet::clip(Interval window) const {
  return intersect(IntervalSet({window}));
}

IntervalSet IntervalSet::coalesce(SimTime gap) const {
  std::vector<Interval> out;
  for (const Interval& iv : spans_) {
    if (!out.empty() && iv.begin - out.back().end < gap) {
      out.back().end = iv.end;
    } else {
      out.push_back(iv);
    }
  }
  return IntervalSet(std::move(out));
}

}  // namespace wansim
