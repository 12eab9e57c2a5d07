#pragma once

#include <compare>
#include <cstdint>
#include <limits>
#include <stdexcept>
#include <string>

namespace wansim {

// Simulated time in integer microseconds. Durations and instants share the
// type; instants are measured from engine start.
class SimTime {
 public:
  constexpr SimTime() = default;

  static constexpr SimTime micros(std::int64_t us) { return SimTime(us); }
  static constexpr SimTime millis(std::int64_t ms) { return SimTime(ms * 1000); }
  static constexpr SimTime seconds(std::int64_t s) { return SimTime(s * 1'000'000); }
  // Rounds to the nearest microsecond.
  static SimTime from_seconds(double s);
  static constexpr SimTime max() { return SimTime(std::numeric_limits<std::int64_t>::max()); }

  constexpr std::int64_t us() const { return us_; }
  constexpr double ms() const { return static_cast<double>(us_) / 1e3; }
  constexpr double sec() const { return static_cast<double>(us_) / 1e6; }

  constexpr auto operator<=>(const SimTime&) const = default;

  constexpr SimTime operator+(SimTime o) const { return SimTime(us_ + o.us_); }
  constexpr SimTime operator-(SimTime o) const { return SimTime(us_ - o.us_); }
  constexpr SimTime& operator+=(SimTime o) {
    us_ += o.us_;
    return *this;
  }
  constexpr SimTime operator*(std::int64_t k) const { return SimTime(us_ * k); }
  constexpr SimTime operator/(std::int64_t k) const { return SimTime(us_ / k); }

  std::string str() const;

 private:
  constexpr explicit SimTime(std::int64_t us) : us_(us) {}
  std::int64_t us_ = 0;
};

using BitRate = std::uint64_t;  // bits per second

// Time to clock `bytes` onto a wire of `rate` bits/s, rounded up to whole
// microseconds so that a non-empty frame always occupies the wire.
SimTime serialization_time(std::uint64_t bytes, BitRate rate);

class SimError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace wansim
