#include "wansim/session/session.hpp"

#include <algorithm>
#include <cmath>

namespace wansim::session {

namespace T = wansim::transport;

std::string_view to_string(HandoverPhase p) {
  switch (p) {
    case HandoverPhase::Established: return "Established";
    case HandoverPhase::NewAddrKnown: return "NewAddrKnown";
    case HandoverPhase::MigrationComplete: return "MigrationComplete";
    case HandoverPhase::NewConnOpening: return "NewConnOpening";
    case HandoverPhase::Switched: return "Switched";
  }
  return "?";
}

bool is_legal_transition(HandoverPhase from, HandoverPhase to) {
  using P = HandoverPhase;
  switch (from) {
    case P::Established: return to == P::NewAddrKnown;
    case P::NewAddrKnown: return to == P::MigrationComplete;
    case P::MigrationComplete: return to == P::NewConnOpening;
    case P::NewConnOpening: return to == P::Switched || to == P::Established;
    case P::Switched: return to == P::Established;
  }
  return false;
}

std::string_view to_string(ControlKind k) {
  switch (k) {
    case ControlKind::NewAddrNotify: return "NEW_ADDR_NOTIFY";
    case ControlKind::MigrationComplete: return "MIGRATION_COMPLETE";
    case ControlKind::SetPrimary: return "SET_PRIMARY";
    case ControlKind::CloseOld: return "CLOSE_OLD";
  }
  return "?";
}

// ---------------------------------------------------------------- Session

Session::Session(SessionLayer& layer, SessionId id, SessionConfig cfg)
    : layer_(layer), id_(id), cfg_(std::move(cfg)) {}

Engine& Session::engine() { return layer_.engine(); }
T::TransportLayer& Session::tl() { return layer_.transport(); }

bool Session::ready() const { return !failed_ && primary_ && primary_->server_ready && !primary_->dead; }

Address Session::client_addr() const { return primary_ ? primary_->client : client_addrs_.front(); }
Address Session::server_addr() const { return primary_ ? primary_->server : server_addrs_.front(); }

T::Socket Session::primary_client_socket() const {
  if (!primary_) throw ProtocolError("session has no primary channel");
  return primary_->client_sock;
}

std::optional<T::Socket> Session::primary_server_socket() const {
  if (!primary_) return std::nullopt;
  return primary_->server_sock;
}

void Session::set_phase(HandoverPhase to) {
  if (!is_legal_transition(phase_, to)) {
    throw ProtocolError("illegal handover transition " + std::string(to_string(phase_)) + " -> " +
                        std::string(to_string(to)));
  }
  phase_ = to;
}

void Session::trace(std::string name, std::int64_t value) { engine().trace("session", name, id_, value); }

void Session::log_control(ControlKind k, std::optional<Address> addr) {
  control_log_.push_back({k, addr, id_, engine().now()});
  trace(std::string(to_string(k)));
}

Session::Channel* Session::channel(std::uint64_t token) {
  if (primary_ && primary_->token == token) return &*primary_;
  if (standby_ && standby_->token == token) return &*standby_;
  return nullptr;
}

void Session::open_channel(Channel& ch, const Connector& connector) {
  auto hello = std::make_shared<SessionHello>();
  hello->session_id = id_;
  hello->channel = ch.token;
  hello->resume_from = ch.resume_from;
  ConnectRequest req{ch.client, ch.server, cfg_.transport, hello, client_callbacks(ch.token)};
  const Connector& use = connector ? connector : layer_.direct_connector();
  const ChannelHandle h = use(req);
  ch.client_sock = h.client;
  ch.end_to_end_acks = h.end_to_end_acks;
  trace("SYN", static_cast<std::int64_t>(ch.resume_from));
}

Session::Channel* Session::any_channel(std::uint64_t token) {
  if (Channel* ch = channel(token)) return ch;
  for (Channel& ch : retired_) {
    if (ch.token == token) return &ch;
  }
  return nullptr;
}

// Every channel carries a contiguous session range starting at a point the
// client already held, so an in-order transport ack is also a session ack.
void Session::on_server_acked(std::uint64_t token, std::uint64_t cumulative) {
  Channel* ch = any_channel(token);
  if (!ch) return;
  while (!ch->unacked.empty() && ch->unacked.front().first <= cumulative) {
    session_acked_ = std::max(session_acked_, ch->unacked.front().second);
    ch->unacked.pop_front();
  }
  pump();
}

T::SocketCallbacks Session::client_callbacks(std::uint64_t token) {
  T::SocketCallbacks cb;
  cb.on_record = [this, token](const T::Record& r) { on_client_record(token, r); };
  cb.on_error = [this, token](const std::string& why) { on_channel_error(token, why); };
  cb.on_established = [this, token] {
    if (!standby_ || standby_->token != token || !on_standby_rtt) return;
    const SimTime rtt = tl().state(standby_->client_sock).srtt;
    auto fn = on_standby_rtt;  // the callback may replace itself
    fn(rtt);
  };
  return cb;
}

T::SocketCallbacks Session::attach_server(T::Socket s, const SessionHello& hello) {
  T::SocketCallbacks cb;
  Channel* ch = channel(hello.channel);
  if (!ch || ch->dead) return cb;
  ch->server_sock = s;
  const std::uint64_t token = hello.channel;
  cb.on_established = [this, token] { on_server_ready(token); };
  cb.on_acked = [this, token](std::uint64_t cum) { on_server_acked(token, cum); };
  cb.on_error = [this, token](const std::string& why) { on_channel_error(token, why); };
  return cb;
}

void Session::on_server_ready(std::uint64_t token) {
  Channel* ch = channel(token);
  if (!ch) return;
  ch->server_ready = true;
  if (primary_ && primary_->token == token) {
    if (!ready_at_) {
      ready_at_ = engine().now();
      trace("ESTABLISHED");
      if (on_ready) on_ready();
    }
    pump();
  } else if (auto_switch_) {
    switch_primary();
  }
}

void Session::on_client_record(std::uint64_t, const T::Record& r) {
  const auto* rec = dynamic_cast<const SessionRecord*>(r.body.get());
  if (!rec || rec->header.session_id != id_ || rec->payload == 0) return;
  const std::uint64_t begin = rec->header.seq;
  const std::uint64_t end = begin + rec->payload;
  const SimTime now = engine().now();
  std::uint64_t have = ledger_.delivered();

  if (begin > have) {
    auto it = reorder_.find(begin);
    if (it == reorder_.end()) {
      reorder_.emplace(begin, end);
    } else {
      duplicate_bytes_ += std::min(it->second, end) - begin;
      it->second = std::max(it->second, end);
    }
    return;
  }
  if (end <= have) {
    duplicate_bytes_ += end - begin;
    return;
  }
  duplicate_bytes_ += have - begin;
  ledger_.record({have, end}, now);
  have = end;
  while (!reorder_.empty() && reorder_.begin()->first <= have) {
    auto [b, e] = *reorder_.begin();
    reorder_.erase(reorder_.begin());
    if (e <= have) {
      duplicate_bytes_ += e - b;
      continue;
    }
    duplicate_bytes_ += have - b;
    ledger_.record({have, e}, now);
    have = e;
  }
  check_complete();
}

void Session::check_complete() {
  if (completed_at_ || written_ == 0 || ledger_.delivered() < written_) return;
  completed_at_ = engine().now();
  trace("COMPLETE", static_cast<std::int64_t>(written_));
  if (on_complete) on_complete(*completed_at_);
}

void Session::on_channel_error(std::uint64_t token, const std::string& why) {
  if (standby_ && standby_->token == token) {
    standby_.reset();
    trace("HANDOVER_ABORTED");
    if (primary_ && !primary_->dead) {
      if (rebinding_) {
        rebinding_ = false;
      } else if (phase_ == HandoverPhase::NewConnOpening) {
        set_phase(HandoverPhase::Established);
        announced_.reset();
      }
    } else {
      fail("new connection failed and old connection is gone: " + why);
    }
    return;
  }
  if (primary_ && primary_->token == token) {
    primary_->dead = true;
    // A handover in progress may still rescue the session.
    if (!standby_ && phase_ != HandoverPhase::NewConnOpening) fail(why);
  }
}

void Session::fail(const std::string& why) {
  if (failed_) return;
  failed_ = true;
  failure_ = why;
  trace("FAILED");
  if (on_failure) on_failure(why);
}

void Session::write(std::uint64_t bytes, WriteOptions opts) {
  if (bytes == 0) return;
  if (opts.app_rate_bps && *opts.app_rate_bps == 0) throw ProtocolError("application rate must be positive");
  const SimTime now = engine().now();
  SimTime start = now;
  if (!productions_.empty()) {
    const Production& last = productions_.back();
    SimTime last_end = last.start;
    if (last.rate) last_end = last.start + serialization_time(last.bytes, *last.rate);
    start = std::max(start, last_end);
  }
  productions_.push_back({written_, bytes, start, opts.app_rate_bps});
  written_ += bytes;
  completed_at_.reset();
  pump();
}

std::uint64_t Session::available(SimTime now) const {
  std::uint64_t avail = 0;
  for (const Production& p : productions_) {
    if (p.start > now) break;
    if (!p.rate) {
      avail = p.base + p.bytes;
      continue;
    }
    const long double produced =
        std::floor(static_cast<long double>(*p.rate) * static_cast<long double>((now - p.start).us()) / 8e6L);
    avail = p.base + std::min<std::uint64_t>(p.bytes, static_cast<std::uint64_t>(produced));
  }
  return avail;
}

void Session::pause_sender() {
  paused_ = true;
  trace("PAUSE");
}

void Session::resume_sender() {
  paused_ = false;
  trace("RESUME");
  pump();
}

void Session::pump() {
  if (failed_ || paused_ || !primary_ || !primary_->server_ready || primary_->dead || !primary_->server_sock) return;
  const T::Socket s = *primary_->server_sock;
  if (!tl().exists(s) || tl().state(s).phase == T::Phase::Closed) return;
  const SimTime now = engine().now();
  const std::uint64_t avail = available(now);
  bool starved = false;
  const auto& st = tl().state(s);
  const std::uint64_t window = std::min(st.cwnd_bytes, st.peer_rwnd_bytes);
  // Bytes the client already holds need not be sent again.
  next_seq_ = std::max(next_seq_, std::min(session_acked_, written_));
  while (next_seq_ < written_) {
    // Resent bytes are committed one window at a time so that acks arriving
    // meanwhile can still let the sender skip them.
    const std::uint64_t windows = next_seq_ < stream_sent_ ? 1 : cfg_.sndbuf_windows;
    const std::uint64_t limit = std::min<std::uint64_t>(cfg_.sndbuf_bytes, std::max<std::uint64_t>(window, 1) * windows);
    if (tl().backlog(s) >= limit) break;
    const std::uint64_t len = std::min<std::uint64_t>(cfg_.record_payload, avail > next_seq_ ? avail - next_seq_ : 0);
    // Produce full records while the application is still generating.
    if (len == 0 || (len < cfg_.record_payload && avail < written_)) {
      starved = true;
      break;
    }
    auto rec = std::make_shared<SessionRecord>();
    rec->header = {id_, next_seq_};
    rec->payload = len;
    tl().write(s, T::Record{len + kFrameHeaderBytes, rec});
    primary_->transport_written += len + kFrameHeaderBytes;
    if (primary_->end_to_end_acks) primary_->unacked.emplace_back(primary_->transport_written, next_seq_ + len);
    if (next_seq_ < stream_sent_) bytes_resent_ += std::min(stream_sent_, next_seq_ + len) - next_seq_;
    if (!first_send_) first_send_ = now;
    next_seq_ += len;
    stream_sent_ = std::max(stream_sent_, next_seq_);
    ++records_sent_;
  }
  if (!starved || wake_) return;
  // Sleep until the next full record (or the tail) has been produced.
  const std::uint64_t need = std::min<std::uint64_t>(next_seq_ + cfg_.record_payload, written_);
  SimTime at = now;
  for (const Production& p : productions_) {
    if (p.base + p.bytes < need) continue;
    at = p.start;
    if (p.rate) at = at + serialization_time(need - p.base, *p.rate);
    break;
  }
  if (at <= now) at = now + SimTime::micros(1);
  wake_ = engine().schedule(at, EventKind::Timer, "session.produce", [this] {
    wake_.reset();
    pump();
  });
}

void Session::announce_new_address(const Address& addr) {
  if (phase_ != HandoverPhase::Established) {
    throw ProtocolError("address announcement rejected while a handover is in progress");
  }
  if (addr == server_addr()) {
    trace("NEW_ADDR_NOTIFY_NOOP");
    return;
  }
  announced_ = addr;
  if (server_addrs_.size() >= 2) server_addrs_.erase(server_addrs_.begin());
  server_addrs_.push_back(addr);
  set_phase(HandoverPhase::NewAddrKnown);
  log_control(ControlKind::NewAddrNotify, addr);
}

void Session::signal_migration_complete() {
  if (phase_ != HandoverPhase::NewAddrKnown) {
    throw ProtocolError("migration-complete signal without a pending address announcement");
  }
  set_phase(HandoverPhase::MigrationComplete);
  log_control(ControlKind::MigrationComplete, announced_);
  handover_started_ = engine().now();
  set_phase(HandoverPhase::NewConnOpening);
  if (strategy_) {
    strategy_(*this);
    return;
  }
  open_standby(handover_client_addr(), layer_.direct_connector());
}

Address Session::handover_client_addr() const {
  const Address current = client_addr();
  for (const Address& a : client_addrs_) {
    if (a != current) return a;
  }
  return current;
}

void Session::discard_standby() {
  if (!standby_) return;
  Channel ch = *standby_;
  standby_.reset();
  ch.dead = true;
  retired_.push_back(ch);
  if (tl().exists(ch.client_sock)) tl().abort(ch.client_sock);
  if (ch.server_sock && tl().exists(*ch.server_sock)) tl().abort(*ch.server_sock);
  trace("STANDBY_DISCARDED");
}

void Session::open_standby(const Address& client, const Connector& connector) {
  if (!rebinding_ && phase_ != HandoverPhase::NewConnOpening) {
    throw ProtocolError("no handover in progress");
  }
  if (standby_) throw ProtocolError("standby connection already open");
  Channel ch;
  ch.token = next_token_++;
  ch.client = client;
  ch.server = rebinding_ ? server_addr() : *announced_;
  ch.resume_from = ledger_.delivered();
  standby_ = ch;
  try {
    open_channel(*standby_, connector);
  } catch (const SimError& e) {
    on_channel_error(ch.token, e.what());
  }
}

HandoverReport Session::switch_primary() {
  if (!standby_ || !standby_->server_ready) throw ProtocolError("switch requested without an open standby connection");
  if (!rebinding_ && phase_ != HandoverPhase::NewConnOpening) throw ProtocolError("switch outside a handover");
  const SimTime now = engine().now();
  HandoverReport rep;
  rep.started = handover_started_;
  rep.switched = now;
  rep.resume_from = std::max(standby_->resume_from, session_acked_);
  rep.bytes_retransmitted = stream_sent_ > rep.resume_from ? stream_sent_ - rep.resume_from : 0;
  rep.rebind = rebinding_;

  Channel old = *primary_;
  primary_ = *standby_;
  standby_.reset();
  next_seq_ = rep.resume_from;
  if (!rebinding_) set_phase(HandoverPhase::Switched);
  log_control(ControlKind::SetPrimary, primary_->server);

  // Data still queued on the old connection drains; the receiver drops repeats.
  if (old.server_sock && tl().exists(*old.server_sock)) tl().close(*old.server_sock);
  log_control(ControlKind::CloseOld, std::nullopt);
  retired_.push_back(old);

  if (!rebinding_) set_phase(HandoverPhase::Established);
  rebinding_ = false;
  announced_.reset();
  handovers_.push_back(rep);
  if (on_handover) on_handover(rep);
  pump();
  return rep;
}

void Session::rebind(const Connector& connector) {
  if (phase_ != HandoverPhase::Established || rebinding_ || standby_) {
    throw ProtocolError("rebind requires an idle established session");
  }
  if (!primary_) throw ProtocolError("session has no primary channel");
  rebinding_ = true;
  handover_started_ = engine().now();
  open_standby(client_addr(), connector);
}

// ---------------------------------------------------------------- SessionLayer

SessionLayer::SessionLayer(T::TransportLayer& tl, SessionConfig defaults) : tl_(tl), defaults_(std::move(defaults)) {
  T::validate(defaults_.transport);
  if (defaults_.record_payload == 0) throw ProtocolError("record payload must be positive");
}

void SessionLayer::serve(const Address& server) {
  if (serving(server)) return;
  tl_.listen(server, defaults_.transport, [this](T::Socket s, const T::Hello& h) { return accept(s, h); });
  serving_[server] = true;
}

bool SessionLayer::serving(const Address& server) const { return serving_.count(server) > 0; }

T::SocketCallbacks SessionLayer::accept(T::Socket s, const T::Hello& hello) {
  const auto* h = dynamic_cast<const SessionHello*>(hello.get());
  if (!h) return {};
  auto it = sessions_.find(h->session_id);
  if (it == sessions_.end()) return {};
  return it->second->attach_server(s, *h);
}

Session& SessionLayer::open_session(const Address& client, const Address& server, const Connector& connector) {
  return open_session(std::vector<Address>{client}, server, connector);
}

Session& SessionLayer::open_session(const std::vector<Address>& client_addrs, const Address& server,
                                    const Connector& connector) {
  if (client_addrs.empty() || client_addrs.size() > 2) throw ProtocolError("a session needs one or two client addresses");
  const SessionId id = next_id_++;
  auto sess = std::unique_ptr<Session>(new Session(*this, id, defaults_));
  Session& s = *sess;
  s.client_addrs_ = client_addrs;
  s.server_addrs_ = {server};
  Session::Channel ch;
  ch.token = s.next_token_++;
  ch.client = client_addrs.front();
  ch.server = server;
  s.primary_ = ch;
  sessions_.emplace(id, std::move(sess));
  try {
    s.open_channel(*s.primary_, connector);
  } catch (...) {
    sessions_.erase(id);
    throw;
  }
  s.trace("OPEN");
  return s;
}

Session& SessionLayer::session(SessionId id) {
  auto it = sessions_.find(id);
  if (it == sessions_.end()) throw ProtocolError("unknown session");
  return *it->second;
}

Connector SessionLayer::direct_connector() {
  return [this](const ConnectRequest& r) {
    return ChannelHandle{T::active(tl_.connect(r.client, r.server, r.client_cfg, r.client_callbacks, r.hello)), true};
  };
}

}  // namespace wansim::session
