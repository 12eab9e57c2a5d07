#include "wansim/accelerator/proxy.hpp"

#include <algorithm>

namespace wansim::accel {

namespace T = wansim::transport;
using session::ChannelHandle;
using session::ConnectRequest;
using session::SessionRecord;

namespace {

struct ChainHello : T::RecordBody {
  const void* pair = nullptr;
  std::uint64_t chain = 0;
};

enum Leg : int { kClientLeg = 0, kWanLeg = 1, kServerLeg = 2 };

}  // namespace

struct ProxyPair::Chain {
  std::uint64_t id = 0;
  std::optional<T::Socket> near_client;  // near's end of the client segment
  T::Socket near_wan;                    // near's end of the WAN segment
  std::optional<T::Socket> far_wan;      // far's end of the WAN segment
  T::Socket far_server;                  // far's end of the server segment
  std::deque<T::Record> to_client;       // waiting for the client segment
  std::deque<T::Record> to_wan;          // waiting for the WAN segment
  // Far proxy buffering: bytes taken from the server that the near proxy has
  // not acknowledged yet, and where each WAN record ends with its original size.
  std::uint64_t held = 0;
  std::uint64_t wan_written = 0;
  std::deque<std::pair<std::uint64_t, std::uint64_t>> wan_unacked;
  bool close_client = false;
  bool close_wan = false;
  bool dead = false;
};

ProxyPair::ProxyPair(T::TransportLayer& tl, ProxyPairSpec spec)
    : tl_(tl),
      spec_(std::move(spec)),
      near_store_(spec_.store_capacity_bytes),
      far_store_(spec_.store_capacity_bytes),
      alive_(std::make_shared<bool>(true)) {
  spec_.policy.validate();
  if (spec_.descriptor) spec_.descriptor->validate();
  if (spec_.near_at.node == spec_.far_at.node) throw AccelError("proxies must sit on different nodes");
  if (spec_.lan_window_bytes == 0) throw AccelError("LAN window must be positive");
  const Topology& topo = tl_.network().topology();
  if (!topo.link_of(spec_.near_at) || !topo.link_of(spec_.far_at)) throw AccelError("proxy address is not attached");
  tl_.network().topology().route(spec_.near_at, spec_.far_at);
}

ProxyPair::~ProxyPair() {
  *alive_ = false;
  for (const Address& a : listening_) tl_.unlisten(a);
}

T::TransportConfig ProxyPair::wan_config() const {
  T::TransportConfig c;
  c.rwnd_cap_bytes = spec_.policy.wan_window_bytes;
  c.pacing_bps = spec_.policy.wan_rate_cap;
  return c;
}

T::TransportConfig ProxyPair::lan_config() const {
  T::TransportConfig c;
  c.rwnd_cap_bytes = spec_.lan_window_bytes;
  return c;
}

bool ProxyPair::on_path(const Address& client, const Address& server) const {
  std::vector<Hop> hops;
  try {
    hops = tl_.network().topology().route(client, server);
  } catch (const RouteError&) {
    return false;
  }
  std::optional<std::size_t> near_i, far_i;
  for (std::size_t i = 0; i < hops.size(); ++i) {
    if (hops[i].to.node == spec_.near_at.node && !near_i) near_i = i;
    if (hops[i].from.node == spec_.far_at.node) far_i = i;
  }
  return near_i && far_i && *near_i < *far_i;
}

session::Connector ProxyPair::connector() {
  return [this](const ConnectRequest& req) -> ChannelHandle {
    if (spec_.mode == ProxyMode::Bypass) {
      return {T::active(tl_.connect(req.client, req.server, req.client_cfg, req.client_callbacks, req.hello)), true};
    }
    return open_chain(req);
  };
}

void ProxyPair::ensure_listening(const Address& addr) {
  if (listening_.count(addr)) return;
  std::weak_ptr<bool> alive = alive_;
  tl_.listen(addr, addr == spec_.far_at ? wan_config() : lan_config(),
             [this, addr, alive](T::Socket s, const T::Hello& h) -> T::SocketCallbacks {
               if (alive.expired()) return {};
               return accept(addr, s, h);
             });
  listening_.insert(addr);
}

ChannelHandle ProxyPair::open_chain(const ConnectRequest& req) {
  const std::vector<Hop> hops = tl_.network().topology().route(req.client, req.server);
  std::optional<Address> near_entry, far_exit;
  std::optional<std::size_t> near_i, far_i;
  for (std::size_t i = 0; i < hops.size(); ++i) {
    if (hops[i].to.node == spec_.near_at.node && !near_i) {
      near_i = i;
      near_entry = hops[i].to;
    }
    if (hops[i].from.node == spec_.far_at.node) {
      far_i = i;
      far_exit = hops[i].from;
    }
  }
  if (!near_i || !far_i || *near_i >= *far_i) throw AccelError("insertion points not on the session path");

  ensure_listening(*near_entry);
  ensure_listening(spec_.far_at);

  auto chain = std::make_unique<Chain>();
  Chain& c = *chain;
  c.id = next_chain_++;
  chains_.emplace(c.id, std::move(chain));
  ++stats_.chains;
  auto hello = std::make_shared<ChainHello>();
  hello->pair = this;
  hello->chain = c.id;

  T::SocketCallbacks wan_cb;
  wan_cb.on_record = [this, &c](const T::Record& r) { from_wan(c, r); };
  wan_cb.on_closed = [this, &c] { leg_closed(c, kWanLeg); };
  wan_cb.on_error = [this, &c](const std::string&) { chain_error(c); };

  T::SocketCallbacks server_cb;
  server_cb.on_record = [this, &c](const T::Record& r) { from_server(c, r); };
  server_cb.on_closed = [this, &c] { leg_closed(c, kServerLeg); };
  server_cb.on_error = [this, &c](const std::string&) { chain_error(c); };

  // The three segments open concurrently; records wait at a proxy until the
  // next segment exists.
  const T::Socket client = T::active(tl_.connect(req.client, *near_entry, req.client_cfg, req.client_callbacks, hello));
  try {
    c.near_wan = T::active(tl_.connect(spec_.near_at, spec_.far_at, wan_config(), wan_cb, hello));
    c.far_server = T::active(tl_.connect(*far_exit, req.server, lan_config(), server_cb, req.hello));
  } catch (...) {
    tl_.abort(client);
    if (tl_.exists(c.near_wan)) tl_.abort(c.near_wan);
    c.dead = true;
    throw;
  }
  return {client, false};
}

T::SocketCallbacks ProxyPair::accept(const Address& at, T::Socket s, const T::Hello& hello) {
  const auto* h = dynamic_cast<const ChainHello*>(hello.get());
  if (!h || h->pair != this) return {};
  auto it = chains_.find(h->chain);
  if (it == chains_.end() || it->second->dead) return {};
  Chain& c = *it->second;
  T::SocketCallbacks cb;
  cb.on_error = [this, &c](const std::string&) { chain_error(c); };
  if (at == spec_.far_at) {
    c.far_wan = s;
    cb.on_established = [this, &c] { flush(c); };
    cb.on_acked = [this, &c](std::uint64_t cumulative) { wan_acked(c, cumulative); };
    cb.on_closed = [this, &c] { leg_closed(c, kWanLeg); };
  } else {
    c.near_client = s;
    cb.on_established = [this, &c] { flush(c); };
    cb.on_closed = [this, &c] { leg_closed(c, kClientLeg); };
  }
  return cb;
}

std::uint64_t ProxyPair::wan_length(const T::Record& r) const {
  const auto* rec = dynamic_cast<const SessionRecord*>(r.body.get());
  if (!spec_.descriptor || !rec) return r.length;
  const ContentDescriptor& d = *spec_.descriptor;
  const std::uint64_t b = rec->header.seq;
  const std::uint64_t e = b + rec->payload;
  std::uint64_t len = session::kFrameHeaderBytes;
  len += wan_prefix_bytes(d, e) - wan_prefix_bytes(d, b);
  // Bytes past the described content travel uncompressed.
  if (e > d.size_bytes) len += e - std::max(b, d.size_bytes);
  return std::max<std::uint64_t>(len, 1);
}

void ProxyPair::learn_chunks(ChunkStore& store, std::uint64_t& watermark, const T::Record& r) {
  const auto* rec = dynamic_cast<const SessionRecord*>(r.body.get());
  if (!spec_.descriptor || !rec) return;
  const ContentDescriptor& d = *spec_.descriptor;
  const std::uint64_t end = std::min(rec->header.seq + rec->payload, d.size_bytes);
  const std::uint64_t done = end == d.size_bytes ? d.chunk_count() : end / kChunkBytes;
  for (; watermark < done; ++watermark) {
    if (d.chunk_redundant(watermark)) {
      store.count_hit();
      continue;
    }
    const auto len = static_cast<std::uint32_t>(std::min<std::uint64_t>(kChunkBytes, d.size_bytes - watermark * kChunkBytes));
    store.lookup_or_insert(d.chunk_hash(watermark), len);
  }
}

void ProxyPair::from_server(Chain& c, const T::Record& r) {
  if (c.dead) return;
  stats_.lan_bytes_in += r.length;
  c.held += r.length;
  if (tl_.exists(c.far_server)) tl_.set_receive_held(c.far_server, c.held);
  learn_chunks(far_store_, far_watermark_, r);
  auto env = std::make_shared<WanEnvelope>();
  env->original_length = r.length;
  env->inner = r.body;
  c.to_wan.push_back(T::Record{wan_length(r), env});
  flush(c);
}

void ProxyPair::from_wan(Chain& c, const T::Record& r) {
  if (c.dead) return;
  const auto* env = dynamic_cast<const WanEnvelope*>(r.body.get());
  if (!env) return;
  T::Record out{env->original_length, env->inner};
  learn_chunks(near_store_, near_watermark_, out);
  ++stats_.records_relayed;
  c.to_client.push_back(std::move(out));
  flush(c);
}

void ProxyPair::flush(Chain& c) {
  if (c.dead) return;
  auto writable = [this](const std::optional<T::Socket>& s) {
    if (!s || !tl_.exists(*s)) return false;
    const auto& st = tl_.state(*s);
    return st.phase != T::Phase::Closed && !st.closing;
  };
  if (writable(c.far_wan)) {
    while (!c.to_wan.empty()) {
      const T::Record& r = c.to_wan.front();
      stats_.wan_bytes += r.length;
      c.wan_written += r.length;
      const auto* env = static_cast<const WanEnvelope*>(r.body.get());
      c.wan_unacked.emplace_back(c.wan_written, env->original_length);
      tl_.write(*c.far_wan, std::move(c.to_wan.front()));
      c.to_wan.pop_front();
    }
    if (c.close_wan) tl_.close(*c.far_wan);
  }
  if (writable(c.near_client)) {
    while (!c.to_client.empty()) {
      stats_.bytes_to_client += c.to_client.front().length;
      tl_.write(*c.near_client, std::move(c.to_client.front()));
      c.to_client.pop_front();
    }
    if (c.close_client) tl_.close(*c.near_client);
  }
}

// The far proxy reads from the server only as fast as the WAN drains, so its
// buffer never exceeds the LAN window.
void ProxyPair::wan_acked(Chain& c, std::uint64_t cumulative) {
  if (c.dead) return;
  while (!c.wan_unacked.empty() && c.wan_unacked.front().first <= cumulative) {
    c.held -= c.wan_unacked.front().second;
    c.wan_unacked.pop_front();
  }
  if (tl_.exists(c.far_server)) tl_.set_receive_held(c.far_server, c.held);
}

// A graceful close travels toward the client once everything queued behind
// it has been forwarded.
void ProxyPair::leg_closed(Chain& c, int leg) {
  if (c.dead) return;
  if (leg == kServerLeg) {
    c.close_wan = true;
  } else if (leg == kWanLeg) {
    c.close_client = true;
  }
  flush(c);
}

void ProxyPair::chain_error(Chain& c) {
  if (c.dead) return;
  c.dead = true;
  for (const std::optional<T::Socket>& s : {c.near_client, std::optional<T::Socket>(c.near_wan), c.far_wan,
                                            std::optional<T::Socket>(c.far_server)}) {
    if (s && tl_.exists(*s) && tl_.state(*s).phase != T::Phase::Closed) tl_.abort(*s);
  }
}

void insert_pair(session::Session& s, ProxyPair& pair) {
  if (!pair.on_path(s.client_addr(), s.server_addr())) throw AccelError("insertion points not on the session path");
  s.rebind(pair.connector());
}

void remove_pair(session::Session& s, session::SessionLayer& layer) { s.rebind(layer.direct_connector()); }

}  // namespace wansim::accel
