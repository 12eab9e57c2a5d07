#include <random>

#include "doctest.h"
#include "wansim/accelerator/proxy.hpp"

using namespace wansim;
using namespace wansim::accel;
using session::ByteRange;
using session::Session;
using session::SessionLayer;

namespace {

constexpr std::uint64_t kMiB = 1024 * 1024;
constexpr BitRate kGig = 1'000'000'000;
constexpr NodeId kC{0}, kN{1}, kF{2}, kS{3}, kX{4};
constexpr Address kClient{kC, 0}, kNearIn{kN, 0}, kNearWan{kN, 1}, kFarWan{kF, 0}, kFarOut{kF, 1}, kServer{kS, 0};
constexpr Address kOff{kX, 0};

std::string hex(const ChunkHash& h) {
  static const char* d = "0123456789abcdef";
  std::string s;
  for (auto b : h) {
    s += d[b >> 4];
    s += d[b & 15];
  }
  return s;
}

// client - near - (WAN) - far - server, plus a stray node hanging off near.
struct Line {
  Engine engine;
  Network net;
  transport::TransportLayer tl;
  SessionLayer sl;

  explicit Line(SimTime wan_one_way, BitRate wan_rate = kGig)
      : net(engine, Topology::build(std::vector<LinkSpec>{
                        {kClient, kNearIn, SimTime::micros(50), kGig},
                        {kNearWan, kFarWan, wan_one_way, wan_rate},
                        {kFarOut, kServer, SimTime::micros(50), kGig},
                        {{kN, 2}, kOff, SimTime::micros(50), kGig},
                    })),
        tl(net),
        sl(tl) {
    sl.serve(kServer);
  }
};

ProxyPairSpec spec(ProxyMode mode = ProxyMode::Optimizing) {
  ProxyPairSpec s;
  s.near_at = kNearWan;
  s.far_at = kFarWan;
  s.mode = mode;
  return s;
}

double rate_bps(const Session& s, SimTime from, SimTime to) {
  return static_cast<double>(s.deliver_stream().bytes_between(from, to)) * 8.0 / (to - from).sec();
}

}  // namespace

TEST_CASE("optimize_payload arithmetic") {
  ChunkStore store;
  auto r = optimize_payload({8192, 0.0, 1.0}, store);
  CHECK(r.wan_bytes == 8192 + 40);
  CHECK(r.chunks == 1);
  CHECK(store.entries() == 1);

  ChunkStore s2;
  r = optimize_payload({50 * kMiB, 1.0, 0.3}, s2);
  CHECK(r.chunks == 6400);
  CHECK(r.wan_bytes == 256'000);
  CHECK(s2.entries() == 0);

  ChunkStore s3;
  r = optimize_payload({50 * kMiB, 0.5, 0.5}, s3);
  CHECK(r.wan_bytes == 50 * kMiB / 4 + 256'000);
  CHECK(r.novel_chunks == 3200);

  // Oracle: the closed form over a grid, independent of the implementation's rounding path.
  for (std::uint64_t size : std::vector<std::uint64_t>{1, 8191, 8192, 8193, 1000000, 50 * kMiB}) {
    for (double rho : {0.0, 0.1, 0.37, 0.5, 0.9, 1.0}) {
      for (double kappa : {0.05, 0.45, 1.0}) {
        ChunkStore st;
        const auto got = optimize_payload({size, rho, kappa}, st).wan_bytes;
        const double payload = static_cast<double>(size) * (1 - rho) * kappa;
        const auto chunks = (size + 8191) / 8192;
        CHECK(got <= size + 40 * chunks);
        CHECK(std::abs(static_cast<double>(got) - (std::ceil(payload) + 40.0 * static_cast<double>(chunks))) <= 1.0);
      }
    }
  }
  ChunkStore bad;
  CHECK_THROWS_AS(optimize_payload({0, 0, 1}, bad), AccelError);
  CHECK_THROWS_AS(optimize_payload({10, 1.5, 1}, bad), AccelError);
  CHECK_THROWS_AS(optimize_payload({10, 0.5, 0}, bad), AccelError);
}

TEST_CASE("descriptor hit ratio equals redundancy") {
  for (double rho : {0.0, 0.25, 0.5, 0.6, 0.75, 1.0}) {
    ChunkStore store;
    optimize_payload({50 * kMiB, rho, 1.0}, store);
    CHECK(store.hit_ratio() == doctest::Approx(rho).epsilon(1e-12));
    CHECK(store.entries() == static_cast<std::size_t>(6400 - 6400 * rho));
  }
}

TEST_CASE("wan prefix is monotone and additive") {
  ContentDescriptor d{3 * kMiB + 5, 0.6, 0.45};
  std::uint64_t prev = 0;
  for (std::uint64_t x = 0; x <= d.size_bytes; x += 1444) {
    const auto v = wan_prefix_bytes(d, x);
    CHECK(v >= prev);
    prev = v;
  }
  ChunkStore st;
  CHECK(wan_prefix_bytes(d, d.size_bytes) == optimize_payload(d, st).wan_bytes);
  CHECK(wan_prefix_bytes(d, 0) == 0);
}

TEST_CASE("hash_chunks") {
  SUBCASE("known vector") {
    const std::string abc = "abc";
    auto h = hash_chunks(std::span(reinterpret_cast<const std::uint8_t*>(abc.data()), abc.size()));
    REQUIRE(h.size() == 1);
    CHECK(hex(h[0]) == "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
  }
  SUBCASE("repeated content dedups") {
    std::vector<std::uint8_t> bytes(16384);
    for (std::size_t i = 0; i < bytes.size(); ++i) bytes[i] = static_cast<std::uint8_t>(i % 8192 % 251);
    auto h = hash_chunks(bytes);
    REQUIRE(h.size() == 2);
    CHECK(h[0] == h[1]);
    ChunkStore store;
    auto r = optimize_bytes(bytes, 1.0, store);
    CHECK(store.entries() == 1);
    CHECK(r.novel_chunks == 1);
    CHECK(r.wan_bytes == 8192 + 80);
  }
  SUBCASE("empty input") { CHECK(hash_chunks({}).empty()); }
  SUBCASE("short tail chunk") {
    std::vector<std::uint8_t> bytes(8192 * 3 + 7, 1);
    CHECK(hash_chunks(bytes).size() == 4);
  }
  SUBCASE("deterministic replay") {
    std::mt19937_64 rng(99);
    std::vector<std::uint8_t> bytes(kMiB);
    for (auto& b : bytes) b = static_cast<std::uint8_t>(rng());
    CHECK(hash_chunks(bytes) == hash_chunks(bytes));
    CHECK(hash_chunks(bytes).size() == 128);
  }
}

TEST_CASE("chunk store evicts first-in first") {
  ChunkStore store(3 * 8192);
  ContentDescriptor d{5 * 8192, 0.0, 1.0, 17};
  for (std::uint64_t i = 0; i < 5; ++i) store.lookup_or_insert(d.chunk_hash(i), 8192);
  CHECK(store.entries() == 3);
  CHECK_FALSE(store.contains(d.chunk_hash(0)));
  CHECK_FALSE(store.contains(d.chunk_hash(1)));
  CHECK(store.contains(d.chunk_hash(4)));
  CHECK(store.lookup_or_insert(d.chunk_hash(3), 8192));
  CHECK(store.hits() == 1);
}

TEST_CASE("evaluate_policy") {
  AcceleratorPolicy p;
  CHECK(evaluate_policy(p, SimTime::millis(600), false) == Decision::Insert);
  CHECK(evaluate_policy(p, SimTime::millis(90), true) == Decision::Hold);
  CHECK(evaluate_policy(p, SimTime::millis(80), true) == Decision::Remove);
  CHECK(evaluate_policy(p, SimTime::millis(99), false) == Decision::Hold);
  CHECK(evaluate_policy(p, SimTime::millis(100), false) == Decision::Insert);

  // 0 -> 200 -> 0 ms in 10 ms steps, feeding the decision back.
  int inserts = 0, removes = 0;
  bool inserted = false;
  std::vector<int> sweep;
  for (int r = 0; r <= 200; r += 10) sweep.push_back(r);
  for (int r = 190; r >= 0; r -= 10) sweep.push_back(r);
  for (int r : sweep) {
    const Decision d = evaluate_policy(p, SimTime::millis(r), inserted);
    if (d == Decision::Insert) ++inserts, inserted = true;
    if (d == Decision::Remove) ++removes, inserted = false;
  }
  CHECK(inserts == 1);
  CHECK(removes == 1);

  AcceleratorPolicy bad;
  bad.hysteresis = SimTime::millis(200);
  CHECK_THROWS_AS(bad.validate(), AccelError);
}

TEST_CASE("proxy pair lifts a window-limited 600 ms path about 16x") {
  const SimTime wan = SimTime::millis(300) - SimTime::micros(100);
  double direct = 0, proxied = 0;
  {
    Line l(wan);
    Session& s = l.sl.open_session(kClient, kServer);
    s.write(4 * kMiB);
    l.engine.run();
    direct = rate_bps(s, SimTime::seconds(10), SimTime::seconds(30));
  }
  {
    Line l(wan);
    ProxyPair pair(l.tl, spec());
    Session& s = l.sl.open_session(kClient, kServer, pair.connector());
    s.write(40 * kMiB);
    l.engine.run();
    proxied = rate_bps(s, SimTime::seconds(10), SimTime::seconds(20));
    CHECK(s.deliver_stream().merged() == std::vector<ByteRange>{{0, 40 * kMiB}});
  }
  // Oracle: min(B, W/RTT) per segment; the WAN segment binds in both runs.
  const double rtt = 0.6;
  const double payload_share = 1444.0 / 1460.0;
  CHECK(direct == doctest::Approx(64.0 * 1024 * 8 / rtt * payload_share).epsilon(0.10));
  CHECK(proxied == doctest::Approx(1024.0 * 1024 * 8 / rtt * payload_share).epsilon(0.10));
  CHECK(proxied / direct == doctest::Approx(16.0).epsilon(0.10));
}

TEST_CASE("segment bottleneck law under a WAN rate cap") {
  for (BitRate cap : std::vector<BitRate>{2000000, 8000000}) {
    Line l(SimTime::millis(50));
    auto sp = spec();
    sp.policy.wan_rate_cap = cap;
    ProxyPair pair(l.tl, sp);
    Session& s = l.sl.open_session(kClient, kServer, pair.connector());
    s.write(6 * kMiB);
    l.engine.run();
    const double got = rate_bps(s, SimTime::seconds(2), SimTime::seconds(5));
    // WAN segment: min(cap on wire bytes, 1 MiB / 100 ms); LAN segments are far faster.
    const double wire_share = 1444.0 / 1500.0;
    const double oracle = std::min(static_cast<double>(cap) * wire_share, 1024.0 * 1024 * 8 / 0.1);
    CAPTURE(cap);
    CHECK(got == doctest::Approx(oracle).epsilon(0.10));
  }
}

TEST_CASE("bypass mode is transparent") {
  auto run = [](bool with_pair) {
    Line l(SimTime::millis(40));
    ProxyPair pair(l.tl, spec(ProxyMode::Bypass));
    Session& s = with_pair ? l.sl.open_session(kClient, kServer, pair.connector())
                           : l.sl.open_session(kClient, kServer);
    s.write(3 * kMiB);
    l.engine.run();
    return std::make_pair(*s.completed_at(), s.deliver_stream().merged());
  };
  const auto a = run(false), b = run(true);
  CHECK(a.second == b.second);
  CHECK(std::abs((a.first - b.first).us()) <= 3 * serialization_time(1500, kGig).us());
}

TEST_CASE("insert then remove before any data matches the baseline") {
  auto run = [](bool churn) {
    Line l(SimTime::millis(40));
    ProxyPair pair(l.tl, spec());
    Session& s = l.sl.open_session(kClient, kServer);
    l.engine.run();
    if (churn) {
      insert_pair(s, pair);
      l.engine.run();
      remove_pair(s, l.sl);
      l.engine.run();
    }
    l.engine.run_until(SimTime::seconds(5));
    s.write(2 * kMiB);
    l.engine.run();
    return std::make_pair(*s.completed_at() - *s.first_send(), s.deliver_stream().merged());
  };
  const auto a = run(false), b = run(true);
  CHECK(a == b);
}

TEST_CASE("insertion points must be on the path") {
  Line l(SimTime::millis(40));
  auto sp = spec();
  sp.near_at = kOff;  // the stray node is not between client and server
  ProxyPair pair(l.tl, sp);
  Session& s = l.sl.open_session(kClient, kServer);
  l.engine.run();
  CHECK_FALSE(pair.on_path(kClient, kServer));
  CHECK_THROWS_AS(insert_pair(s, pair), AccelError);
  ProxyPair good(l.tl, spec());
  CHECK(good.on_path(kClient, kServer));
  CHECK_FALSE(good.on_path(kServer, kClient));
}

TEST_CASE("optimized transfer: WAN bytes, store sync and transparency") {
  const std::uint64_t size = 5 * kMiB + 123;
  Line l(SimTime::millis(100));
  auto sp = spec();
  sp.descriptor = ContentDescriptor{size, 0.5, 0.5, 3};
  ProxyPair pair(l.tl, sp);
  Session& s = l.sl.open_session(kClient, kServer, pair.connector());
  s.write(size);
  l.engine.run();
  CHECK(s.deliver_stream().merged() == std::vector<ByteRange>{{0, size}});
  CHECK(pair.near_store().entry_set() == pair.far_store().entry_set());
  CHECK(pair.near_store().entries() > 0);
  CHECK(pair.far_store().hit_ratio() == doctest::Approx(0.5).epsilon(0.001));
  ChunkStore oracle;
  const auto opt = optimize_payload(*sp.descriptor, oracle);
  CHECK(pair.stats().wan_bytes == opt.wan_bytes + 16 * s.records_sent());
  CHECK(pair.far_store().entry_set() == oracle.entry_set());
}

TEST_CASE("insert and remove mid-transfer keep exactly-once delivery") {
  Line l(SimTime::millis(150));
  ProxyPair pair(l.tl, spec());
  Session& s = l.sl.open_session(kClient, kServer);
  s.write(6 * kMiB);
  l.engine.schedule(SimTime::seconds(3), EventKind::Control, "ins", [&] { insert_pair(s, pair); });
  l.engine.schedule(SimTime::seconds(8), EventKind::Control, "rm", [&] { remove_pair(s, l.sl); });
  l.engine.run();
  CHECK(s.handovers().size() == 2);
  CHECK(s.deliver_stream().gap_free());
  CHECK(s.deliver_stream().merged() == std::vector<ByteRange>{{0, 6 * kMiB}});
  CHECK(pair.stats().chains == 1);
}

TEST_CASE("far proxy buffers at most its LAN window ahead of the WAN") {
  Line l(SimTime::millis(50));
  auto sp = spec();
  sp.policy.wan_rate_cap = 2'000'000;
  sp.lan_window_bytes = 256 * 1024;
  ProxyPair pair(l.tl, sp);
  Session& s = l.sl.open_session(kClient, kServer, pair.connector());
  s.write(16 * kMiB);
  std::uint64_t worst = 0;
  for (int t = 1; t <= 20; ++t) {
    l.engine.run_until(SimTime::seconds(t));
    const ProxyStats& st = pair.stats();
    worst = std::max(worst, st.lan_bytes_in - st.bytes_to_client);
  }
  // LAN window at the far proxy plus what the WAN window can hold in flight.
  CHECK(worst <= sp.lan_window_bytes + sp.policy.wan_window_bytes + 64 * 1024);
  CHECK(worst >= sp.lan_window_bytes / 2);
  l.engine.run();
  CHECK(s.deliver_stream().merged() == std::vector<ByteRange>{{0, 16 * kMiB}});
}
