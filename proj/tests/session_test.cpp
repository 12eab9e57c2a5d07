#include <random>
#include <set>

#include "doctest.h"
#include "wansim/session/session.hpp"

using namespace wansim;
using namespace wansim::session;
using transport::TransportConfig;

namespace {

constexpr BitRate kFast = 1'000'000'000;
constexpr NodeId kClient{0}, kRouter{1}, kServerA{2}, kServerB{3}, kIsland{4};
constexpr Address kC0{kClient, 0}, kC1{kClient, 1}, kA{kServerA, 0}, kB{kServerB, 0}, kIsle{kIsland, 0};

// Dual-homed client, one router, old host A and new host B.
struct Net {
  Engine engine;
  Network net;
  transport::TransportLayer tl;
  SessionLayer sl;

  Net(SimTime delay_a, SimTime delay_b, SessionConfig cfg = {})
      : net(engine, Topology::build(std::vector<LinkSpec>{
                        {kC0, {kRouter, 0}, SimTime::micros(50), kFast},
                        {kC1, {kRouter, 1}, SimTime::micros(50), kFast},
                        {{kRouter, 2}, kA, delay_a, kFast},
                        {{kRouter, 3}, kB, delay_b, kFast},
                        {kIsle, {kIsland, 1}, SimTime::micros(50), kFast},
                    })),
        tl(net),
        sl(tl, cfg) {
    sl.serve(kA);
    sl.serve(kB);
  }
};

SimTime completion_of(Session& s) {
  REQUIRE(s.completed_at());
  REQUIRE(s.first_send());
  return *s.completed_at() - *s.first_send();
}

}  // namespace

TEST_CASE("frame header encodes big-endian and round-trips") {
  FrameHeader h{0x0102030405060708ULL, 0x1112131415161718ULL};
  auto bytes = encode_frame_header(h);
  const std::array<std::uint8_t, 16> expect{0x01, 0x02, 0x03, 0x04, 0x05, 0x06, 0x07, 0x08,
                                            0x11, 0x12, 0x13, 0x14, 0x15, 0x16, 0x17, 0x18};
  CHECK(bytes == expect);
  CHECK(decode_frame_header(bytes) == h);
  std::mt19937_64 rng(7);
  for (int i = 0; i < 200; ++i) {
    FrameHeader r{rng(), rng()};
    CHECK(decode_frame_header(encode_frame_header(r)) == r);
  }
  std::array<std::uint8_t, 15> short_buf{};
  CHECK_THROWS_AS(decode_frame_header(short_buf), std::invalid_argument);
}

TEST_CASE("delivery ledger detects gaps and overlaps") {
  DeliveryLedger l;
  CHECK(l.gap_free());
  CHECK(l.merged().empty());
  l.record({0, 10}, SimTime::millis(1));
  l.record({10, 25}, SimTime::millis(2));
  CHECK(l.gap_free());
  CHECK(l.overlap_free());
  CHECK(l.merged() == std::vector<ByteRange>{{0, 25}});
  CHECK(l.bytes_between(SimTime::millis(1), SimTime::millis(2)) == 15);
  DeliveryLedger gap;
  gap.record({0, 10}, {});
  gap.record({12, 20}, {});
  CHECK_FALSE(gap.gap_free());
  DeliveryLedger over;
  over.record({0, 10}, {});
  over.record({5, 20}, {});
  CHECK_FALSE(over.overlap_free());
}

TEST_CASE("phase machine admits exactly the handover order") {
  using P = HandoverPhase;
  const std::set<std::pair<P, P>> legal{{P::Established, P::NewAddrKnown},
                                        {P::NewAddrKnown, P::MigrationComplete},
                                        {P::MigrationComplete, P::NewConnOpening},
                                        {P::NewConnOpening, P::Switched},
                                        {P::Switched, P::Established},
                                        {P::NewConnOpening, P::Established}};
  int pairs = 0;
  for (int f = 0; f < kHandoverPhaseCount; ++f) {
    for (int t = 0; t < kHandoverPhaseCount; ++t) {
      if (f == t) continue;
      ++pairs;
      const auto from = static_cast<P>(f), to = static_cast<P>(t);
      CAPTURE(to_string(from));
      CAPTURE(to_string(to));
      CHECK(is_legal_transition(from, to) == (legal.count({from, to}) == 1));
    }
  }
  CHECK(pairs == 20);
}

TEST_CASE("operations outside their phase raise protocol errors") {
  Net n(SimTime::millis(5), SimTime::millis(5));
  Session& s = n.sl.open_session({kC0, kC1}, kA);
  s.set_handover_strategy([](Session&) {});  // stall in NewConnOpening
  n.engine.run();

  // Established
  CHECK_THROWS_AS(s.signal_migration_complete(), ProtocolError);
  CHECK_THROWS_AS(s.switch_primary(), ProtocolError);
  CHECK_THROWS_AS(s.open_standby(kC1, {}), ProtocolError);
  // NewAddrKnown
  s.announce_new_address(kB);
  CHECK(s.phase() == HandoverPhase::NewAddrKnown);
  CHECK_THROWS_AS(s.announce_new_address(kA), ProtocolError);
  CHECK_THROWS_AS(s.switch_primary(), ProtocolError);
  // NewConnOpening
  const SimTime at = n.engine.now();
  s.signal_migration_complete();
  CHECK(s.phase() == HandoverPhase::NewConnOpening);
  CHECK(n.engine.now() == at);
  CHECK_THROWS_AS(s.signal_migration_complete(), ProtocolError);
  CHECK_THROWS_AS(s.announce_new_address(kB), ProtocolError);
  CHECK_THROWS_AS(s.switch_primary(), ProtocolError);
  CHECK_THROWS_AS(s.rebind({}), ProtocolError);
}

TEST_CASE("open_session: readiness, errors and ids") {
  SUBCASE("10 ms RTT path is ready at 15 ms") {
    Net n(SimTime::millis(5) - SimTime::micros(50), SimTime::millis(5));
    Session& s = n.sl.open_session(kC0, kA);
    CHECK(s.phase() == HandoverPhase::Established);
    n.engine.run();
    REQUIRE(s.ready_at());
    CHECK(s.ready());
    CHECK(std::abs(s.ready_at()->ms() - 15.0) < 0.1);
  }
  SUBCASE("unroutable server") {
    Net n(SimTime::millis(5), SimTime::millis(5));
    CHECK_THROWS_AS(n.sl.open_session(kC0, kIsle), RouteError);
    CHECK(n.sl.session_count() == 0);
  }
  SUBCASE("refused connection fails the session") {
    Net n(SimTime::millis(5), SimTime::millis(5));
    n.tl.unlisten(kB);
    Session& s = n.sl.open_session(kC0, kB);
    n.engine.run();
    CHECK(s.failed());
    CHECK_FALSE(s.ready());
  }
  SUBCASE("independent ids between the same endpoints") {
    Net n(SimTime::millis(5), SimTime::millis(5));
    Session& a = n.sl.open_session(kC0, kA);
    Session& b = n.sl.open_session(kC0, kA);
    CHECK(a.id() != b.id());
    a.write(100'000);
    b.write(50'000);
    n.engine.run();
    CHECK(a.stream_delivered() == 100'000);
    CHECK(b.stream_delivered() == 50'000);
  }
}

TEST_CASE("no data sent leaves an empty ledger") {
  Net n(SimTime::millis(5), SimTime::millis(5));
  Session& s = n.sl.open_session(kC0, kA);
  n.engine.run();
  CHECK(s.deliver_stream().entries().empty());
  CHECK(s.stream_delivered() == 0);
}

TEST_CASE("clean handover of 50 MiB delivers one contiguous range") {
  Net n(SimTime::millis(5), SimTime::millis(5));
  Session& s = n.sl.open_session({kC0, kC1}, kA);
  const std::uint64_t size = 50ULL * 1024 * 1024;
  s.write(size);
  n.engine.schedule(SimTime::seconds(2), EventKind::Control, "announce", [&] { s.announce_new_address(kB); });
  n.engine.schedule(SimTime::seconds(3), EventKind::Control, "done", [&] { s.signal_migration_complete(); });
  n.engine.run();
  REQUIRE(s.handovers().size() == 1);
  CHECK(s.server_addr() == kB);
  CHECK(s.client_addr() == kC1);
  CHECK(s.deliver_stream().merged() == std::vector<ByteRange>{{0, size}});
  CHECK(s.deliver_stream().gap_free());
  CHECK(s.deliver_stream().overlap_free());
  CHECK(s.stream_delivered() <= s.stream_sent());
  CHECK(s.phase() == HandoverPhase::Established);
}

TEST_CASE("handover with identical delays costs under 2 RTT") {
  const SimTime d = SimTime::millis(20);
  const std::uint64_t size = 8ULL * 1024 * 1024;
  Net base(d, d);
  Session& b = base.sl.open_session({kC0, kC1}, kA);
  b.write(size);
  base.engine.run();

  Net mig(d, d);
  Session& m = mig.sl.open_session({kC0, kC1}, kA);
  m.write(size);
  mig.engine.schedule(SimTime::millis(500), EventKind::Control, "announce", [&] { m.announce_new_address(kB); });
  mig.engine.schedule(SimTime::seconds(1), EventKind::Control, "done", [&] { m.signal_migration_complete(); });
  mig.engine.run();
  REQUIRE(m.handovers().size() == 1);
  const double rtt = 2 * (d.sec() + 50e-6);
  const double diff = completion_of(m).sec() - completion_of(b).sec();
  CAPTURE(diff);
  CHECK(std::abs(diff) <= 2 * rtt);
  CHECK(m.deliver_stream().merged() == std::vector<ByteRange>{{0, size}});
}

TEST_CASE("handover after everything is delivered retransmits nothing") {
  Net n(SimTime::millis(5), SimTime::millis(5));
  Session& s = n.sl.open_session({kC0, kC1}, kA);
  s.write(200'000);
  n.engine.run();
  s.announce_new_address(kB);
  s.signal_migration_complete();
  n.engine.run();
  REQUIRE(s.handovers().size() == 1);
  CHECK(s.handovers()[0].bytes_retransmitted == 0);
  CHECK(s.handovers()[0].resume_from == 200'000);
  CHECK(s.duplicate_bytes() == 0);
}

TEST_CASE("handover trace follows the control sequence") {
  Net n(SimTime::millis(5), SimTime::millis(80));
  Session& s = n.sl.open_session({kC0, kC1}, kA);
  s.write(4'000'000);
  n.engine.schedule(SimTime::millis(100), EventKind::Control, "a", [&] { s.announce_new_address(kB); });
  n.engine.schedule(SimTime::millis(300), EventKind::Control, "c", [&] { s.signal_migration_complete(); });
  n.engine.run();
  std::vector<std::string> names;
  std::vector<SimTime> times;
  for (const TraceRecord& r : n.engine.trace_log()) {
    if (r.category != "session" || r.subject != s.id()) continue;
    if (r.name == "NEW_ADDR_NOTIFY" || r.name == "MIGRATION_COMPLETE" || r.name == "SET_PRIMARY" ||
        r.name == "CLOSE_OLD" || (r.name == "SYN" && r.at > SimTime{})) {
      names.push_back(r.name);
      times.push_back(r.at);
    }
  }
  CHECK(names == std::vector<std::string>{"NEW_ADDR_NOTIFY", "MIGRATION_COMPLETE", "SYN", "SET_PRIMARY", "CLOSE_OLD"});
  CHECK(std::is_sorted(times.begin(), times.end()));
  // The new connection needs 1.5 RTT on the 80 ms path before it is promoted.
  REQUIRE(s.handovers().size() == 1);
  CHECK(s.handovers()[0].duration().ms() >= 1.5 * 160.0);
  CHECK(s.handovers()[0].duration().ms() < 1.5 * 160.0 + 2.0);
}

TEST_CASE("announce without completion is inert") {
  auto run = [](bool announce) {
    Net n(SimTime::millis(10), SimTime::millis(10));
    Session& s = n.sl.open_session({kC0, kC1}, kA);
    s.write(2'000'000);
    if (announce) {
      n.engine.schedule(SimTime::millis(50), EventKind::Control, "a", [&] { s.announce_new_address(kB); });
    }
    n.engine.run();
    return std::make_tuple(*s.completed_at(), s.deliver_stream().entries(), s.deliver_stream().times(),
                           n.net.counters().delivered);
  };
  CHECK(run(false) == run(true));
}

TEST_CASE("failed new connection rolls back to the old one") {
  Net n(SimTime::millis(5), SimTime::millis(5));
  n.tl.unlisten(kB);
  Session& s = n.sl.open_session({kC0, kC1}, kA);
  s.write(3'000'000);
  n.engine.schedule(SimTime::millis(50), EventKind::Control, "a", [&] { s.announce_new_address(kB); });
  n.engine.schedule(SimTime::millis(60), EventKind::Control, "c", [&] { s.signal_migration_complete(); });
  n.engine.run();
  CHECK_FALSE(s.failed());
  CHECK(s.phase() == HandoverPhase::Established);
  CHECK(s.handovers().empty());
  CHECK(s.server_addr() == kA);
  CHECK(s.deliver_stream().merged() == std::vector<ByteRange>{{0, 3'000'000}});
}

TEST_CASE("rebind on the same address pair keeps the stream intact") {
  Net n(SimTime::millis(10), SimTime::millis(10));
  Session& s = n.sl.open_session(kC0, kA);
  s.write(3'000'000);
  n.engine.schedule(SimTime::millis(100), EventKind::Control, "r", [&] { s.rebind(n.sl.direct_connector()); });
  n.engine.run();
  REQUIRE(s.handovers().size() == 1);
  CHECK(s.handovers()[0].rebind);
  CHECK(s.phase() == HandoverPhase::Established);
  CHECK(s.deliver_stream().merged() == std::vector<ByteRange>{{0, 3'000'000}});
}

TEST_CASE("application pacing bounds throughput") {
  Net n(SimTime::millis(5), SimTime::millis(5));
  Session& s = n.sl.open_session(kC0, kA);
  n.engine.run();
  const BitRate rate = 2'000'000;
  s.write(1'000'000, {rate});
  n.engine.run();
  const double secs = completion_of(s).sec();
  // 8 Mbit at 2 Mbit/s.
  CHECK(secs == doctest::Approx(4.0).epsilon(0.01));
  CHECK(s.deliver_stream().gap_free());
}

TEST_CASE("downtime pause stalls and resumes the sender") {
  Net n(SimTime::millis(5), SimTime::millis(5));
  Session& s = n.sl.open_session(kC0, kA);
  s.write(5'000'000);
  n.engine.schedule(SimTime::millis(100), EventKind::Control, "p", [&] { s.pause_sender(); });
  n.engine.schedule(SimTime::millis(600), EventKind::Control, "r", [&] { s.resume_sender(); });
  n.engine.run();
  // No delivery in the middle of the pause once queued data drained.
  CHECK(s.deliver_stream().bytes_between(SimTime::millis(300), SimTime::millis(600)) == 0);
  CHECK(s.stream_delivered() == 5'000'000);
}

TEST_CASE("exactly-once delivery over 1000 random handovers") {
  std::mt19937_64 rng(20240611);
  int contiguous = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    std::uniform_int_distribution<int> delay_ms(1, 150), size_dist(1, 1 << 20), when_ms(0, 800), lead_ms(0, 200);
    const SimTime da = SimTime::millis(delay_ms(rng)), db = SimTime::millis(delay_ms(rng));
    const auto size = static_cast<std::uint64_t>(size_dist(rng));
    const SimTime complete = SimTime::millis(when_ms(rng) + 1);
    const SimTime announce = SimTime::millis(std::max<std::int64_t>(0, complete.us() / 1000 - lead_ms(rng)));
    Net n(da, db);
    Session& s = n.sl.open_session({kC0, kC1}, kA);
    s.write(size);
    n.engine.schedule(announce, EventKind::Control, "a", [&] { s.announce_new_address(kB); });
    n.engine.schedule(complete, EventKind::Control, "c", [&] { s.signal_migration_complete(); });
    n.engine.run();
    // Oracle: a set of every byte offset handed to the application.
    std::uint64_t covered = 0;
    bool ok = s.deliver_stream().gap_free() && s.deliver_stream().overlap_free();
    for (const ByteRange& r : s.deliver_stream().entries()) covered += r.end - r.begin;
    ok = ok && covered == size && s.stream_delivered() == size && s.stream_delivered() <= s.stream_sent();
    if (ok) ++contiguous;
    else CAPTURE(trial);
  }
  CHECK(contiguous == 1000);
}
