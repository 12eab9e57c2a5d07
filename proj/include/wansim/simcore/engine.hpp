#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <string_view>
#include <unordered_set>
#include <vector>

#include "wansim/simcore/time.hpp"

namespace wansim {

enum class EventKind : std::uint8_t { FrameArrival, Timer, Control };

std::string_view to_string(EventKind kind);

class EventHandle {
 public:
  constexpr EventHandle() = default;
  constexpr explicit EventHandle(std::uint64_t seq) : seq_(seq) {}
  constexpr std::uint64_t seq() const { return seq_; }
  constexpr bool valid() const { return seq_ != 0; }

 private:
  std::uint64_t seq_ = 0;
};

// One processed event, as recorded in the engine's event log.
struct EventRecord {
  SimTime fire_at;
  std::uint64_t seq = 0;
  EventKind kind = EventKind::Timer;
  std::string_view label;  // must point at storage with static duration

  bool operator==(const EventRecord&) const = default;
};

// Protocol-level observation emitted by the layers above the engine
// (handover messages, cwnd samples, ...). Ordered by emission.
struct TraceRecord {
  SimTime at;
  std::string category;
  std::string name;
  std::uint64_t subject = 0;
  std::int64_t value = 0;

  bool operator==(const TraceRecord&) const = default;
};

struct EngineStats {
  std::uint64_t processed = 0;
  std::uint64_t cancelled = 0;
  SimTime clock;
};

// Single-threaded discrete-event engine. Events with equal timestamps fire in
// ascending scheduling order.
class Engine {
 public:
  using Action = std::function<void()>;

  Engine() = default;
  Engine(const Engine&) = delete;
  Engine& operator=(const Engine&) = delete;
  Engine(Engine&&) = default;
  Engine& operator=(Engine&&) = default;

  SimTime now() const { return now_; }

  // Throws SimError when `at` lies in the past.
  EventHandle schedule(SimTime at, EventKind kind, std::string_view label, Action action);
  EventHandle schedule_in(SimTime delay, EventKind kind, std::string_view label, Action action) {
    return schedule(now_ + delay, kind, label, std::move(action));
  }
  // Returns false if the event already fired or was never scheduled.
  bool cancel(EventHandle handle);

  EngineStats run_until(SimTime t);
  // Runs until the queue drains or stop() is called.
  EngineStats run();
  void stop() { stop_requested_ = true; }

  bool idle() const { return heap_.size() == cancelled_.size(); }
  std::size_t pending() const { return heap_.size() - cancelled_.size(); }
  std::uint64_t processed() const { return processed_; }

  void set_event_log(bool enabled) { log_events_ = enabled; }
  const std::vector<EventRecord>& event_log() const { return event_log_; }

  void trace(std::string_view category, std::string_view name, std::uint64_t subject,
             std::int64_t value = 0);
  const std::vector<TraceRecord>& trace_log() const { return trace_; }

 private:
  struct Entry {
    SimTime fire_at;
    std::uint64_t seq;
    EventKind kind;
    std::string_view label;
    Action action;
  };
  struct Later {
    bool operator()(const Entry& a, const Entry& b) const {
      if (a.fire_at != b.fire_at) return a.fire_at > b.fire_at;
      return a.seq > b.seq;
    }
  };

  bool step(SimTime limit, EngineStats& stats);

  SimTime now_;
  std::uint64_t next_seq_ = 1;
  std::uint64_t processed_ = 0;
  std::vector<Entry> heap_;
  std::unordered_set<std::uint64_t> cancelled_;
  std::unordered_set<std::uint64_t> live_;
  bool stop_requested_ = false;
  bool log_events_ = false;
  std::vector<EventRecord> event_log_;
  std::vector<TraceRecord> trace_;
};

}  // namespace wansim
