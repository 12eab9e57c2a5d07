#include "wansim/simcore/engine.hpp"

#include <algorithm>
#include <cmath>

namespace wansim {

SimTime SimTime::from_seconds(double s) {
  if (!std::isfinite(s) || s < 0) throw SimError("time must be finite and non-negative");
  return SimTime(static_cast<std::int64_t>(std::llround(s * 1e6)));
}

std::string SimTime::str() const {
  return std::to_string(us_) + "us";
}

SimTime serialization_time(std::uint64_t bytes, BitRate rate) {
  if (rate == 0) throw SimError("link rate must be positive");
  constexpr std::uint64_t kMaxBytes = std::numeric_limits<std::uint64_t>::max() / 8'000'000u;
  if (bytes > kMaxBytes) throw SimError("frame too large");
  const std::uint64_t bits_us = bytes * 8'000'000u;
  return SimTime::micros(static_cast<std::int64_t>(bits_us / rate + (bits_us % rate != 0 ? 1 : 0)));
}

std::string_view to_string(EventKind kind) {
  switch (kind) {
    case EventKind::FrameArrival: return "frame";
    case EventKind::Timer: return "timer";
    case EventKind::Control: return "control";
  }
  return "?";
}

EventHandle Engine::schedule(SimTime at, EventKind kind, std::string_view label, Action action) {
  if (at < now_) {
    throw SimError("cannot schedule event at " + at.str() + " before now " + now_.str());
  }
  const std::uint64_t seq = next_seq_++;
  heap_.push_back(Entry{at, seq, kind, label, std::move(action)});
  std::push_heap(heap_.begin(), heap_.end(), Later{});
  live_.insert(seq);
  return EventHandle(seq);
}

bool Engine::cancel(EventHandle handle) {
  if (!handle.valid() || live_.erase(handle.seq()) == 0) return false;
  cancelled_.insert(handle.seq());
  return true;
}

bool Engine::step(SimTime limit, EngineStats& stats) {
  while (!heap_.empty()) {
    if (heap_.front().fire_at > limit) return false;
    std::pop_heap(heap_.begin(), heap_.end(), Later{});
    Entry e = std::move(heap_.back());
    heap_.pop_back();
    if (cancelled_.erase(e.seq) != 0) {
      ++stats.cancelled;
      continue;
    }
    live_.erase(e.seq);
    now_ = e.fire_at;
    if (log_events_) event_log_.push_back(EventRecord{e.fire_at, e.seq, e.kind, e.label});
    ++processed_;
    ++stats.processed;
    e.action();
    return true;
  }
  return false;
}

EngineStats Engine::run_until(SimTime t) {
  if (t < now_) throw SimError("run_until target " + t.str() + " is in the past");
  EngineStats stats;
  stop_requested_ = false;
  while (!stop_requested_ && step(t, stats)) {
  }
  if (!stop_requested_) now_ = t;
  stats.clock = now_;
  return stats;
}

EngineStats Engine::run() {
  EngineStats stats;
  stop_requested_ = false;
  while (!stop_requested_ && step(SimTime::max(), stats)) {
  }
  stats.clock = now_;
  return stats;
}

void Engine::trace(std::string_view category, std::string_view name, std::uint64_t subject,
                   std::int64_t value) {
  trace_.push_back(TraceRecord{now_, std::string(category), std::string(name), subject, value});
}

}  // namespace wansim
