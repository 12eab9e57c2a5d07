#include "wansim/transport/transport.hpp"

#include <algorithm>
#include <cmath>

namespace wansim::transport {

namespace {

struct TransferBody : RecordBody {
  std::uint64_t transfer = 0;
};

}  // namespace

struct TransportLayer::Segment : FramePayload {
  enum class Kind : std::uint8_t { Syn, SynAck, Ack, Data, Fin, FinAck, Rst, Probe, ProbeReply };
  struct Mark {
    std::uint64_t end = 0;
    Record record;
  };

  Kind kind = Kind::Data;
  std::uint64_t conn = 0;
  std::uint64_t seq = 0;
  std::uint32_t len = 0;
  std::uint64_t ack = 0;
  std::uint64_t rwnd = 0;
  std::vector<Mark> marks;
  Hello hello;
};

struct TransportLayer::Endpoint {
  enum class St : std::uint8_t { SynSent, SynReceived, Established, Closed };
  struct Pending {
    std::uint64_t start = 0;
    std::uint64_t end = 0;
    Record record;
  };

  Socket sock;
  TransportConfig cfg;
  SocketCallbacks cb;
  St st = St::SynSent;
  ConnectionState s;
  double cwnd = 0;

  // Sender.
  std::deque<Pending> records;
  std::size_t unmarked = 0;  // index into `records` of the first record not yet marked
  std::deque<std::pair<std::uint64_t, SimTime>> in_flight;  // (end seq, sent at)
  SimTime next_pace;
  EventHandle pace_timer;
  bool fin_sent = false;
  SimTime handshake_sent;

  // Receiver.
  std::map<std::uint64_t, std::uint64_t> out_of_order;  // seq -> end
  std::map<std::uint64_t, Record> marks;                // end -> record
  std::uint64_t last_advertised = 0;
  std::uint64_t peer_window_max = 0;
};

struct TransportLayer::Transfer {
  TransferReport report;
  Socket receiver;
  std::function<void(const TransferReport&)> done;
};

void validate(const TransportConfig& cfg) {
  if (cfg.mss == 0) throw TransportError("mss must be positive");
  if (cfg.rwnd_cap_bytes < cfg.mss) throw TransportError("receive window must hold at least one segment");
  if (cfg.initial_cwnd_segments == 0) throw TransportError("initial cwnd must be positive");
  if (cfg.ssthresh_bytes == 0) throw TransportError("ssthresh must be positive");
  if (cfg.pacing_bps && *cfg.pacing_bps == 0) throw TransportError("pacing rate must be positive");
}

TransportLayer::TransportLayer(Network& net) : net_(net) {
  // Every interface runs the stack, so refusals and probe echoes work anywhere.
  for (NodeId n : net_.topology().nodes()) {
    for (LinkId l : net_.topology().links_of(n)) {
      const LinkSpec& spec = net_.topology().link(l);
      ensure_bound(spec.a.node == n ? spec.a : spec.b);
    }
  }
}

TransportLayer::~TransportLayer() = default;

void TransportLayer::ensure_bound(const Address& addr) {
  if (!net_.bound(addr)) {
    net_.bind(addr, [this, addr](const Frame& f) { on_frame(addr, f); });
  }
}

void TransportLayer::listen(const Address& addr, TransportConfig cfg, AcceptHandler on_accept) {
  validate(cfg);
  if (!net_.topology().link_of(addr)) throw TransportError("cannot listen on detached address " + to_string(addr));
  listeners_[addr] = Listener{cfg, std::move(on_accept)};
  ensure_bound(addr);
}

void TransportLayer::unlisten(const Address& addr) { listeners_.erase(addr); }

TransportLayer::Endpoint& TransportLayer::endpoint(Socket s) {
  auto it = sockets_.find(s);
  if (it == sockets_.end()) throw TransportError("unknown socket");
  return *it->second;
}

const TransportLayer::Endpoint& TransportLayer::endpoint(Socket s) const {
  auto it = sockets_.find(s);
  if (it == sockets_.end()) throw TransportError("unknown socket");
  return *it->second;
}

bool TransportLayer::exists(Socket s) const { return sockets_.contains(s); }

const ConnectionState& TransportLayer::state(Socket s) const { return endpoint(s).s; }

std::uint64_t TransportLayer::backlog(Socket s) const {
  const auto& e = endpoint(s);
  return e.s.buffered_end - e.s.ack_next;
}

void TransportLayer::set_callbacks(Socket s, SocketCallbacks callbacks) { endpoint(s).cb = std::move(callbacks); }

ConnectionId TransportLayer::connect(const Address& src, const Address& dst, TransportConfig cfg,
                                     SocketCallbacks callbacks, Hello hello) {
  validate(cfg);
  if (src.node == dst.node) throw TransportError("connection to own node " + to_string(dst) + " rejected");
  net_.topology().route(src, dst);  // throws RouteError

  const ConnectionId id{next_conn_++};
  auto ep = std::make_unique<Endpoint>();
  ep->sock = active(id);
  ep->cfg = cfg;
  ep->cb = std::move(callbacks);
  ep->st = Endpoint::St::SynSent;
  ep->s.local = src;
  ep->s.remote = dst;
  ep->s.rwnd_cap_bytes = cfg.rwnd_cap_bytes;
  ep->s.ssthresh_bytes = cfg.ssthresh_bytes;
  ep->handshake_sent = engine().now();
  Endpoint& ref = *ep;
  sockets_[ep->sock] = ep.get();
  endpoints_[{id.value, src}] = std::move(ep);
  ensure_bound(src);

  auto syn = std::make_shared<Segment>();
  syn->kind = Segment::Kind::Syn;
  syn->conn = id.value;
  syn->rwnd = advertised(ref);
  syn->hello = std::move(hello);
  transmit(ref, std::move(syn), 0);
  return id;
}

void TransportLayer::transmit(Endpoint& ep, std::shared_ptr<Segment> seg, std::uint32_t payload_bytes) {
  Frame f;
  f.src = ep.s.local;
  f.dst = ep.s.remote;
  f.wire_bytes = payload_bytes + ep.cfg.header_bytes;
  f.payload = std::move(seg);
  net_.send(std::move(f));
}

void TransportLayer::write(Socket s, Record record) {
  Endpoint& ep = endpoint(s);
  if (ep.st == Endpoint::St::Closed || ep.s.closing) throw TransportError("write on closed socket");
  if (record.length == 0) throw TransportError("empty record");
  const std::uint64_t start = ep.s.buffered_end;
  ep.s.buffered_end += record.length;
  ep.records.push_back({start, ep.s.buffered_end, std::move(record)});
  try_send(ep);
}

void TransportLayer::close(Socket s) {
  Endpoint& ep = endpoint(s);
  if (ep.st == Endpoint::St::Closed || ep.s.closing) return;
  ep.s.closing = true;
  try_send(ep);
}

void TransportLayer::abort(Socket s) {
  Endpoint& ep = endpoint(s);
  if (ep.st == Endpoint::St::Closed) return;
  auto rst = std::make_shared<Segment>();
  rst->kind = Segment::Kind::Rst;
  rst->conn = ep.sock.conn.value;
  transmit(ep, std::move(rst), 0);
  finish(ep, false, "aborted");
}

void TransportLayer::finish(Endpoint& ep, bool error, const std::string& why) {
  if (ep.st == Endpoint::St::Closed) return;
  ep.st = Endpoint::St::Closed;
  ep.s.phase = Phase::Closed;
  engine().cancel(ep.pace_timer);
  // A transfer whose receiving side dies reports what made it across.
  for (auto it = transfers_.begin(); it != transfers_.end();) {
    Transfer& t = *it->second;
    if (t.receiver.conn == ep.sock.conn && !t.report.complete) {
      t.report.finished = engine().now();
      auto done = std::move(t.done);
      auto report = t.report;
      it = transfers_.erase(it);
      if (done) done(report);
    } else {
      ++it;
    }
  }
  auto cb = ep.cb;
  if (error && cb.on_error) cb.on_error(why);
  if (cb.on_closed) cb.on_closed();
}

void TransportLayer::become_established(Endpoint& ep) {
  ep.st = Endpoint::St::Established;
  ep.s.established = true;
  ep.s.established_at = engine().now();
  ep.cwnd = static_cast<double>(ep.cfg.initial_cwnd_segments) * ep.cfg.mss;
  ep.s.cwnd_bytes = static_cast<std::uint64_t>(ep.cwnd);
  ep.s.phase = ep.cwnd < static_cast<double>(ep.s.ssthresh_bytes) ? Phase::SlowStart : Phase::CongestionAvoidance;
  rtt_sample(ep, engine().now() - ep.handshake_sent);
  if (ep.cfg.trace_cwnd) engine().trace("tcp", "cwnd", ep.sock.conn.value, static_cast<std::int64_t>(ep.s.cwnd_bytes));
  if (ep.cb.on_established) {
    auto f = ep.cb.on_established;
    f();
  }
  try_send(ep);
}

void TransportLayer::rtt_sample(Endpoint& ep, SimTime sample) {
  if (!ep.s.has_rtt_sample) {
    ep.s.srtt = sample;
    ep.s.has_rtt_sample = true;
  } else {
    ep.s.srtt = ep.s.srtt + (sample - ep.s.srtt) / 8;
  }
}

void TransportLayer::try_send(Endpoint& ep) {
  if (ep.st != Endpoint::St::Established) return;
  auto& s = ep.s;
  while (s.send_next < s.buffered_end) {
    const std::uint64_t in_flight = s.send_next - s.ack_next;
    const std::uint64_t wnd = std::min<std::uint64_t>(static_cast<std::uint64_t>(ep.cwnd), s.peer_rwnd_bytes);
    if (in_flight >= wnd) break;
    const auto len = static_cast<std::uint32_t>(
        std::min<std::uint64_t>({ep.cfg.mss, s.buffered_end - s.send_next, wnd - in_flight}));
    const SimTime now = engine().now();
    if (ep.cfg.pacing_bps && now < ep.next_pace) {
      if (!ep.pace_timer.valid()) {
        ep.pace_timer = engine().schedule(ep.next_pace, EventKind::Timer, "tcp.pace", [this, &ep] {
          ep.pace_timer = {};
          try_send(ep);
        });
      }
      return;
    }
    auto seg = std::make_shared<Segment>();
    seg->kind = Segment::Kind::Data;
    seg->conn = ep.sock.conn.value;
    seg->seq = s.send_next;
    seg->len = len;
    seg->ack = s.rcv_next;
    seg->rwnd = advertised(ep);
    const std::uint64_t seg_end = s.send_next + len;
    while (ep.unmarked < ep.records.size() && ep.records[ep.unmarked].end <= seg_end) {
      seg->marks.push_back({ep.records[ep.unmarked].end, ep.records[ep.unmarked].record});
      ++ep.unmarked;
    }
    ep.in_flight.emplace_back(seg_end, now);
    s.send_next = seg_end;
    if (ep.cfg.pacing_bps) {
      ep.next_pace = std::max(now, ep.next_pace) + serialization_time(len + ep.cfg.header_bytes, *ep.cfg.pacing_bps);
    }
    ++data_segments_sent_;
    transmit(ep, std::move(seg), len);
  }
  if (s.closing && !ep.fin_sent && s.ack_next == s.buffered_end) {
    ep.fin_sent = true;
    auto fin = std::make_shared<Segment>();
    fin->kind = Segment::Kind::Fin;
    fin->conn = ep.sock.conn.value;
    fin->seq = s.buffered_end;
    transmit(ep, std::move(fin), 0);
  }
}

void TransportLayer::handle_ack(Endpoint& ep, const Segment& seg) {
  auto& s = ep.s;
  s.peer_rwnd_bytes = seg.rwnd;
  ep.peer_window_max = std::max(ep.peer_window_max, seg.rwnd);
  if (seg.ack <= s.ack_next) {
    try_send(ep);
    return;
  }
  const std::uint64_t acked = seg.ack - s.ack_next;
  s.ack_next = seg.ack;

  std::optional<SimTime> sent_at;
  while (!ep.in_flight.empty() && ep.in_flight.front().first <= s.ack_next) {
    sent_at = ep.in_flight.front().second;
    ep.in_flight.pop_front();
  }
  if (sent_at) rtt_sample(ep, engine().now() - *sent_at);

  const double mss = ep.cfg.mss;
  if (ep.cwnd < static_cast<double>(s.ssthresh_bytes)) {
    ep.cwnd += std::min(static_cast<double>(acked), mss);
  } else {
    ep.cwnd += mss * static_cast<double>(acked) / ep.cwnd;
  }
  // A window closed by a slow reader does not shrink cwnd.
  ep.cwnd = std::min(ep.cwnd, static_cast<double>(std::max<std::uint64_t>(ep.peer_window_max, ep.cfg.mss)));
  const auto new_cwnd = static_cast<std::uint64_t>(ep.cwnd);
  if (new_cwnd != s.cwnd_bytes) {
    s.cwnd_bytes = new_cwnd;
    if (ep.cfg.trace_cwnd) engine().trace("tcp", "cwnd", ep.sock.conn.value, static_cast<std::int64_t>(new_cwnd));
  }
  s.phase = ep.cwnd < static_cast<double>(s.ssthresh_bytes) ? Phase::SlowStart : Phase::CongestionAvoidance;

  while (!ep.records.empty() && ep.records.front().end <= s.ack_next) {
    ep.records.pop_front();
    --ep.unmarked;
  }
  if (ep.cb.on_acked) {
    auto f = ep.cb.on_acked;
    f(s.ack_next);
  }
  if (ep.st == Endpoint::St::Established) try_send(ep);
}

void TransportLayer::note_delivery(Endpoint& ep, const Record& r) {
  if (!transfers_.empty()) {
    if (const auto* tb = dynamic_cast<const TransferBody*>(r.body.get())) {
      auto it = transfers_.find(tb->transfer);
      if (it != transfers_.end()) {
        Transfer& t = *it->second;
        t.report.bytes_delivered += r.length;
        if (t.report.bytes_delivered >= t.report.bytes_requested) {
          t.report.complete = true;
          t.report.finished = engine().now();
          auto done = std::move(t.done);
          auto report = t.report;
          transfers_.erase(it);
          if (done) done(report);
        }
      }
    }
  }
  if (ep.cb.on_record) {
    auto f = ep.cb.on_record;
    f(r);
  }
}

std::uint64_t TransportLayer::advertised(Endpoint& ep) {
  const auto& s = ep.s;
  ep.last_advertised = s.rwnd_cap_bytes - std::min(s.held_bytes, s.rwnd_cap_bytes);
  return ep.last_advertised;
}

void TransportLayer::set_receive_held(Socket s, std::uint64_t held_bytes) {
  Endpoint& ep = endpoint(s);
  ep.s.held_bytes = held_bytes;
  if (ep.st != Endpoint::St::Established) return;
  const std::uint64_t before = ep.last_advertised;
  const std::uint64_t now_open = ep.s.rwnd_cap_bytes - std::min(held_bytes, ep.s.rwnd_cap_bytes);
  const std::uint64_t mss = ep.cfg.mss;
  // Silly-window avoidance: announce only a worthwhile reopening.
  if (now_open >= before + 2 * mss || (before < mss && now_open >= mss)) {
    auto upd = std::make_shared<Segment>();
    upd->kind = Segment::Kind::Ack;
    upd->conn = ep.sock.conn.value;
    upd->ack = ep.s.rcv_next;
    upd->rwnd = advertised(ep);
    transmit(ep, std::move(upd), 0);
  }
}

void TransportLayer::handle_data(Endpoint& ep, const Segment& seg) {
  auto& s = ep.s;
  const std::uint64_t end = seg.seq + seg.len;
  if (end > s.rcv_next) {
    for (const auto& m : seg.marks) {
      if (m.end > s.rcv_next) ep.marks.emplace(m.end, m.record);
    }
    if (seg.seq <= s.rcv_next) {
      s.rcv_next = end;
      auto it = ep.out_of_order.begin();
      while (it != ep.out_of_order.end() && it->first <= s.rcv_next) {
        s.rcv_next = std::max(s.rcv_next, it->second);
        it = ep.out_of_order.erase(it);
      }
    } else {
      auto& slot = ep.out_of_order[seg.seq];
      slot = std::max(slot, end);
    }
  }
  auto ack = std::make_shared<Segment>();
  ack->kind = Segment::Kind::Ack;
  ack->conn = ep.sock.conn.value;
  ack->ack = s.rcv_next;
  ack->rwnd = advertised(ep);
  transmit(ep, std::move(ack), 0);

  while (!ep.marks.empty() && ep.marks.begin()->first <= s.rcv_next && ep.st != Endpoint::St::Closed) {
    Record r = std::move(ep.marks.begin()->second);
    ep.marks.erase(ep.marks.begin());
    note_delivery(ep, r);
  }
}

void TransportLayer::on_frame(const Address& local, const Frame& frame) {
  const auto* seg = dynamic_cast<const Segment*>(frame.payload.get());
  if (seg == nullptr) return;
  using K = Segment::Kind;

  if (seg->kind == K::Probe) {
    auto reply = std::make_shared<Segment>(*seg);
    reply->kind = K::ProbeReply;
    Frame f{local, frame.src, frame.wire_bytes, std::move(reply), 0};
    net_.send(std::move(f));
    return;
  }
  if (seg->kind == K::ProbeReply) {
    auto it = probes_.find(seg->conn);
    if (it == probes_.end()) return;
    auto p = std::move(it->second);
    probes_.erase(it);
    engine().cancel(p.timeout);
    p.done(engine().now() - p.sent);
    return;
  }

  auto it = endpoints_.find({seg->conn, local});
  if (it == endpoints_.end()) {
    if (seg->kind != K::Syn) return;
    auto lit = listeners_.find(local);
    if (lit == listeners_.end()) {
      auto rst = std::make_shared<Segment>();
      rst->kind = K::Rst;
      rst->conn = seg->conn;
      net_.send(Frame{local, frame.src, 40, std::move(rst), 0});
      return;
    }
    auto ep = std::make_unique<Endpoint>();
    ep->sock = passive(ConnectionId{seg->conn});
    ep->cfg = lit->second.cfg;
    ep->st = Endpoint::St::SynReceived;
    ep->s.local = local;
    ep->s.remote = frame.src;
    ep->s.rwnd_cap_bytes = ep->cfg.rwnd_cap_bytes;
    ep->s.ssthresh_bytes = ep->cfg.ssthresh_bytes;
    ep->s.peer_rwnd_bytes = seg->rwnd;
    ep->peer_window_max = seg->rwnd;
    ep->handshake_sent = engine().now();
    Endpoint& ref = *ep;
    sockets_[ep->sock] = ep.get();
    endpoints_[{seg->conn, local}] = std::move(ep);
    ref.cb = lit->second.on_accept(ref.sock, seg->hello);

    auto synack = std::make_shared<Segment>();
    synack->kind = K::SynAck;
    synack->conn = seg->conn;
    synack->rwnd = advertised(ref);
    transmit(ref, std::move(synack), 0);
    return;
  }

  Endpoint& ep = *it->second;
  if (ep.st == Endpoint::St::Closed) return;
  switch (seg->kind) {
    case K::SynAck: {
      if (ep.st != Endpoint::St::SynSent) return;
      ep.s.peer_rwnd_bytes = seg->rwnd;
      ep.peer_window_max = seg->rwnd;
      auto ack = std::make_shared<Segment>();
      ack->kind = K::Ack;
      ack->conn = seg->conn;
      ack->rwnd = advertised(ep);
      transmit(ep, std::move(ack), 0);
      become_established(ep);
      break;
    }
    case K::Ack:
      if (ep.st == Endpoint::St::SynReceived) {
        become_established(ep);
        if (ep.st == Endpoint::St::Closed) return;
      }
      handle_ack(ep, *seg);
      break;
    case K::Data:
      if (ep.st == Endpoint::St::SynReceived) become_established(ep);
      handle_data(ep, *seg);
      break;
    case K::Fin: {
      auto finack = std::make_shared<Segment>();
      finack->kind = K::FinAck;
      finack->conn = seg->conn;
      transmit(ep, std::move(finack), 0);
      finish(ep, false, "");
      break;
    }
    case K::FinAck:
      finish(ep, false, "");
      break;
    case K::Rst:
      finish(ep, true, ep.st == Endpoint::St::SynSent ? "connection refused" : "connection reset");
      break;
    default:
      break;
  }
}

TransferHandle TransportLayer::send(Socket s, std::uint64_t bytes,
                                    std::function<void(const TransferReport&)> on_done) {
  Endpoint& ep = endpoint(s);
  const std::uint64_t id = next_transfer_++;
  TransferReport report{id, bytes, 0, engine().now(), engine().now(), false};
  if (bytes == 0) {
    report.complete = true;
    if (on_done) on_done(report);
    return {id};
  }
  auto t = std::make_unique<Transfer>();
  t->report = report;
  t->receiver = Socket{s.conn, s.side == Side::Active ? Side::Passive : Side::Active};
  t->done = std::move(on_done);
  transfers_[id] = std::move(t);
  auto body = std::make_shared<TransferBody>();
  body->transfer = id;
  for (std::uint64_t off = 0; off < bytes; off += ep.cfg.mss) {
    write(s, Record{std::min<std::uint64_t>(ep.cfg.mss, bytes - off), body});
  }
  return {id};
}

void TransportLayer::probe_rtt(const Address& src, const Address& dst,
                               std::function<void(std::optional<SimTime>)> done, SimTime timeout) {
  ensure_bound(src);
  const std::uint64_t id = next_probe_++;
  auto seg = std::make_shared<Segment>();
  seg->kind = Segment::Kind::Probe;
  seg->conn = id;
  PendingProbe p{std::move(done), engine().now(), {}};
  p.timeout = engine().schedule_in(timeout, EventKind::Timer, "probe.timeout", [this, id] {
    auto it = probes_.find(id);
    if (it == probes_.end()) return;
    auto cb = std::move(it->second.done);
    probes_.erase(it);
    cb(std::nullopt);
  });
  probes_[id] = std::move(p);
  net_.send(Frame{src, dst, 40, std::move(seg), 0});
}

double steady_state_throughput(std::uint64_t rwnd_cap_bytes, SimTime rtt, std::optional<BitRate> link_rate) {
  if (rtt <= SimTime{}) {
    if (!link_rate) throw TransportError("throughput undefined for zero RTT on an unbounded link");
    return static_cast<double>(*link_rate);
  }
  const double window_limited = static_cast<double>(rwnd_cap_bytes) * 8.0 / rtt.sec();
  return link_rate ? std::min(static_cast<double>(*link_rate), window_limited) : window_limited;
}

}  // namespace wansim::transport
