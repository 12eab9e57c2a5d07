#include <algorithm>
#include <random>

#include "doctest.h"
#include "wansim/simcore/engine.hpp"
#include "wansim/simcore/interval_set.hpp"
#include "wansim/simcore/network.hpp"

using namespace wansim;

namespace {

constexpr NodeId kClient{0}, kEmu{1}, kServerA{2}, kServerB{3};

std::vector<LinkSpec> chain_specs() {
  return {
      {{kClient, 0}, {kEmu, 0}, SimTime::millis(1), 100'000'000},
      {{kEmu, 1}, {kServerA, 0}, SimTime::millis(5), 100'000'000},
      {{kEmu, 2}, {kServerB, 0}, SimTime::millis(300), 100'000'000},
  };
}

struct Blob : FramePayload {
  int tag = 0;
};

}  // namespace

TEST_CASE("four-node chain builds three links and routes through the emulator") {
  auto specs = chain_specs();
  Topology t = Topology::build(specs);
  CHECK(t.link_count() == 3);
  CHECK(t.node_count() == 4);
  auto r = t.route({kClient, 0}, {kServerB, 0});
  REQUIRE(r.size() == 2);
  CHECK(r[0].link.value == 0);
  CHECK(r[1].link.value == 2);
  CHECK(r[1].dir == Direction::Forward);
  auto back = t.route({kServerB, 0}, {kClient, 0});
  REQUIRE(back.size() == 2);
  CHECK(back[0].dir == Direction::Reverse);
  CHECK(t.path_rtt({kClient, 0}, {kServerB, 0}) == SimTime::millis(602));
}

TEST_CASE("empty topology is valid but cannot route") {
  Topology t = Topology::build({});
  CHECK(t.link_count() == 0);
  Engine e;
  Network net(e, t);
  CHECK_THROWS_AS(net.send(Frame{{kClient, 0}, {kServerA, 0}, 100, nullptr, 0}), RouteError);
}

TEST_CASE("duplicate addresses are rejected") {
  std::vector<LinkSpec> specs = chain_specs();
  specs.push_back({{kClient, 0}, {kEmu, 0}, SimTime::millis(1), 1000});
  CHECK_THROWS_AS(Topology::build(specs), SimError);
  std::vector<LinkSpec> loop{{{kClient, 0}, {kClient, 0}, SimTime{}, 1000}};
  CHECK_THROWS_AS(Topology::build(loop), SimError);
  std::vector<LinkSpec> zero{{{kClient, 0}, {kEmu, 0}, SimTime{}, 0}};
  CHECK_THROWS_AS(Topology::build(zero), SimError);
}

TEST_CASE("disconnected endpoints fail at routing time") {
  std::vector<LinkSpec> specs{
      {{kClient, 0}, {kEmu, 0}, SimTime::millis(1), 1000},
      {{kServerA, 0}, {kServerB, 0}, SimTime::millis(1), 1000},
  };
  Topology t = Topology::build(specs);
  CHECK_THROWS_AS(t.route({kClient, 0}, {kServerB, 0}), RouteError);
  CHECK_THROWS_AS(t.route({kClient, 0}, {kClient, 1}), RouteError);
}

TEST_CASE("multi-homed source pins the first hop to its own interface") {
  std::vector<LinkSpec> specs{
      {{kClient, 0}, {kEmu, 0}, SimTime::millis(1), 1000},
      {{kClient, 1}, {kEmu, 1}, SimTime::millis(7), 1000},
      {{kEmu, 2}, {kServerA, 0}, SimTime::millis(1), 1000},
  };
  Topology t = Topology::build(specs);
  CHECK(t.route({kClient, 0}, {kServerA, 0}).front().link.value == 0);
  CHECK(t.route({kClient, 1}, {kServerA, 0}).front().link.value == 1);
}

TEST_CASE("schedule ordering, tie-break and cancellation") {
  Engine e;
  std::vector<int> order;
  e.schedule(SimTime::micros(200), EventKind::Timer, "late", [&] { order.push_back(3); });
  e.schedule(SimTime::micros(100), EventKind::Timer, "a", [&] { order.push_back(1); });
  e.schedule(SimTime::micros(100), EventKind::Timer, "b", [&] { order.push_back(2); });
  auto h = e.schedule(SimTime::micros(150), EventKind::Timer, "gone", [&] { order.push_back(99); });
  CHECK(e.cancel(h));
  CHECK_FALSE(e.cancel(h));
  e.schedule(SimTime{}, EventKind::Timer, "now", [&] { order.push_back(0); });
  auto stats = e.run();
  CHECK(order == std::vector<int>{0, 1, 2, 3});
  CHECK(stats.processed == 4);
  CHECK(stats.cancelled == 1);
}

TEST_CASE("scheduling in the past is rejected") {
  Engine e;
  e.run_until(SimTime::millis(5));
  CHECK_THROWS_AS(e.schedule(SimTime::millis(4), EventKind::Timer, "x", [] {}), SimError);
  CHECK_THROWS_AS(e.run_until(SimTime::millis(1)), SimError);
}

TEST_CASE("run_until semantics") {
  Engine e;
  auto s = e.run_until(SimTime::seconds(3));
  CHECK(s.processed == 0);
  CHECK(e.now() == SimTime::seconds(3));

  int fired = 0;
  e.schedule(e.now(), EventKind::Timer, "due", [&] { ++fired; });
  e.schedule(e.now() + SimTime::micros(1), EventKind::Timer, "later", [&] { ++fired; });
  s = e.run_until(e.now());
  CHECK(s.processed == 1);
  CHECK(fired == 1);
  CHECK(e.pending() == 1);
}

TEST_CASE("replay of 1000 random events is deterministic and matches the sort oracle") {
  auto run_once = [](std::uint64_t seed) {
    Engine e;
    e.set_event_log(true);
    std::mt19937_64 rng(seed);
    std::vector<std::pair<std::int64_t, int>> expected;
    std::vector<int> seen;
    for (int i = 0; i < 1000; ++i) {
      const std::int64_t t = static_cast<std::int64_t>(rng() % 500);
      expected.emplace_back(t, i);
      e.schedule(SimTime::micros(t), EventKind::Timer, "rnd", [&seen, i] { seen.push_back(i); });
    }
    e.run();
    std::stable_sort(expected.begin(), expected.end(),
                     [](const auto& a, const auto& b) { return a.first < b.first; });
    std::vector<int> oracle;
    for (auto& [t, i] : expected) oracle.push_back(i);
    CHECK(seen == oracle);
    return e.event_log();
  };
  auto a = run_once(42);
  auto b = run_once(42);
  CHECK(a.size() == 1000);
  CHECK(a == b);
  for (std::size_t i = 1; i < a.size(); ++i) CHECK(a[i - 1].fire_at <= a[i].fire_at);
}

TEST_CASE("causality: nested events never run before their parent") {
  Engine e;
  std::mt19937 rng(7);
  std::vector<std::pair<SimTime, SimTime>> pairs;
  std::function<void(int)> spawn = [&](int depth) {
    const SimTime parent = e.now();
    if (depth == 0) return;
    for (int k = 0; k < 3; ++k) {
      e.schedule_in(SimTime::micros(rng() % 50), EventKind::Timer, "child", [&, parent, depth] {
        pairs.emplace_back(parent, e.now());
        spawn(depth - 1);
      });
    }
  };
  e.schedule(SimTime{}, EventKind::Timer, "root", [&] { spawn(5); });
  e.run();
  CHECK(pairs.size() == 3 + 9 + 27 + 81 + 243);
  for (auto& [p, c] : pairs) CHECK(p <= c);
}

TEST_CASE("frame timing: serialization then propagation, store and forward") {
  Engine e;
  auto specs = chain_specs();
  Network net(e, Topology::build(specs));
  SimTime arrived;
  net.bind({kServerB, 0}, [&](const Frame&) { arrived = e.now(); });
  net.send(Frame{{kClient, 0}, {kServerB, 0}, 1500, nullptr, 0});
  e.run();
  // 1500 B at 100 Mbps = 120 us per hop.
  CHECK(arrived == SimTime::micros(120 + 1000 + 120 + 300'000));
}

TEST_CASE("delay change affects only frames entering afterwards") {
  Engine e;
  auto specs = chain_specs();
  Network net(e, Topology::build(specs));
  std::vector<std::pair<int, SimTime>> got;
  net.bind({kServerA, 0}, [&](const Frame& f) {
    got.emplace_back(static_cast<const Blob&>(*f.payload).tag, e.now());
  });
  auto blob = [](int tag) {
    auto b = std::make_shared<Blob>();
    b->tag = tag;
    return b;
  };
  net.send(Frame{{kClient, 0}, {kServerA, 0}, 1500, blob(1), 0});
  // Frame 1 enters link 1 at 1240 us; change the delay before and after.
  e.run_until(SimTime::micros(1300));
  net.set_link_delay(LinkId{1}, SimTime::millis(300));
  net.send(Frame{{kClient, 0}, {kServerA, 0}, 1500, blob(2), 0});
  e.run();
  REQUIRE(got.size() == 2);
  CHECK(got[0].first == 1);
  CHECK(got[0].second == SimTime::micros(120 + 1000 + 120 + 5000));
  CHECK(got[1].second == SimTime::micros(1300 + 120 + 1000 + 120 + 300'000));

  // Setting the same value is unobservable.
  net.set_link_delay(LinkId{1}, SimTime::millis(300));
  CHECK(net.link_delay(LinkId{1}) == SimTime::millis(300));
  CHECK_THROWS_AS(net.set_link_delay(LinkId{9}, SimTime{}), SimError);
}

TEST_CASE("link conservation under injected loss") {
  Engine e;
  auto specs = chain_specs();
  Network net(e, Topology::build(specs));
  int delivered = 0;
  net.bind({kServerB, 0}, [&](const Frame&) { ++delivered; });
  std::mt19937 rng(3);
  for (int i = 0; i < 500; ++i) {
    if (i % 50 == 0) net.inject_loss(LinkId{static_cast<std::uint32_t>(rng() % 3)}, 2);
    const Address dst = (rng() % 4 == 0) ? Address{kServerA, 0} : Address{kServerB, 0};
    net.send(Frame{{kClient, 0}, dst, 100 + static_cast<std::uint32_t>(rng() % 1400), nullptr, 0});
    if (i % 7 == 0) e.run_until(e.now() + SimTime::micros(rng() % 2000));
    const auto& c = net.counters();
    CHECK(c.injected == c.delivered + c.dropped() + net.in_flight());
  }
  e.run();
  const auto& c = net.counters();
  CHECK(net.in_flight() == 0);
  CHECK(c.injected == 500);
  CHECK(c.delivered + c.dropped() == 500);
  CHECK(c.dropped_loss > 0);
  CHECK(c.dropped_unbound > 0);  // nothing bound at serverA
  CHECK(static_cast<std::uint64_t>(delivered) == c.delivered);
}

TEST_CASE("interval set algebra") {
  auto us = [](std::int64_t a, std::int64_t b) { return Interval{SimTime::micros(a), SimTime::micros(b)}; };
  IntervalSet a({us(0, 10), us(5, 20), us(30, 40)});
  CHECK(a.spans() == std::vector<Interval>{us(0, 20), us(30, 40)});
  CHECK(a.total() == SimTime::micros(30));
  IntervalSet b({us(15, 35)});
  CHECK(a.intersect(b).spans() == std::vector<Interval>{us(15, 20), us(30, 35)});
  CHECK(a.unite(b).spans() == std::vector<Interval>{us(0, 40)});
  CHECK(a.complement(us(-5, 50)).spans() == std::vector<Interval>{us(-5, 0), us(20, 30), us(40, 50)});
  CHECK(a.coalesce(SimTime::micros(11)).spans() == std::vector<Interval>{us(0, 40)});
  CHECK(a.coalesce(SimTime::micros(10)).spans() == a.spans());
  CHECK(a.contains(SimTime::micros(19)));
  CHECK_FALSE(a.contains(SimTime::micros(20)));
}

TEST_CASE("interval set: de Morgan on random sets") {
  std::mt19937 rng(11);
  const Interval window{SimTime{}, SimTime::micros(1000)};
  for (int trial = 0; trial < 200; ++trial) {
    auto random_set = [&] {
      std::vector<Interval> v;
      for (int i = 0; i < 6; ++i) {
        const auto s = static_cast<std::int64_t>(rng() % 1000);
        v.push_back({SimTime::micros(s), SimTime::micros(std::min<std::int64_t>(1000, s + rng() % 100))});
      }
      return IntervalSet(v);
    };
    IntervalSet a = random_set(), b = random_set();
    CHECK(a.unite(b).complement(window) == a.complement(window).intersect(b.complement(window)));
    CHECK(a.intersect(b).total() + a.unite(b).total() == a.total() + b.total());
  }
}
