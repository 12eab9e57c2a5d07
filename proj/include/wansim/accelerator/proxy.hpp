#pragma once

#include <cstdint>
#include <deque>
#include <map>
#include <memory>
#include <optional>
#include <set>

#include "wansim/accelerator/chunk_store.hpp"
#include "wansim/accelerator/policy.hpp"
#include "wansim/session/session.hpp"

namespace wansim::accel {

enum class ProxyMode : std::uint8_t { Bypass, Optimizing };

struct ProxyPairSpec {
  Address near_at;  // near proxy's WAN-facing address (client side)
  Address far_at;   // far proxy's WAN-facing address (server side)
  ProxyMode mode = ProxyMode::Optimizing;
  AcceleratorPolicy policy;
  // Without a descriptor the WAN segment carries the original lengths.
  std::optional<ContentDescriptor> descriptor;
  std::uint64_t store_capacity_bytes = 4ULL << 30;
  // Receive window the proxies advertise on their LAN segments.
  std::uint64_t lan_window_bytes = 1024 * 1024;
};

// Wraps a record while it crosses the WAN segment.
struct WanEnvelope : transport::RecordBody {
  std::uint64_t original_length = 0;
  std::shared_ptr<const transport::RecordBody> inner;
};

struct ProxyStats {
  std::uint64_t chains = 0;
  std::uint64_t records_relayed = 0;
  std::uint64_t lan_bytes_in = 0;   // record bytes received from the server side
  std::uint64_t wan_bytes = 0;      // record bytes written onto the WAN segment
  std::uint64_t bytes_to_client = 0;
};

// A WAN-optimizer pair. In Optimizing mode each session channel is split into
// three connections (client to near, near to far, far to server): the proxies
// acknowledge locally, the WAN segment runs with the large window and optional
// rate cap, and the far proxy shrinks records per the content descriptor.
// Bypass mode hands out plain end-to-end connections.
class ProxyPair {
 public:
  ProxyPair(transport::TransportLayer& tl, ProxyPairSpec spec);
  ~ProxyPair();
  ProxyPair(const ProxyPair&) = delete;
  ProxyPair& operator=(const ProxyPair&) = delete;

  const ProxyPairSpec& spec() const { return spec_; }
  ProxyMode mode() const { return spec_.mode; }
  // Applies to channels opened afterwards.
  void set_mode(ProxyMode m) { spec_.mode = m; }

  // Both proxies lie on the route from client to server, near before far.
  bool on_path(const Address& client, const Address& server) const;

  session::Connector connector();

  const ChunkStore& near_store() const { return near_store_; }
  const ChunkStore& far_store() const { return far_store_; }
  const ProxyStats& stats() const { return stats_; }

 private:
  struct Chain;

  transport::TransportConfig wan_config() const;
  transport::TransportConfig lan_config() const;
  session::ChannelHandle open_chain(const session::ConnectRequest& req);
  void ensure_listening(const Address& addr);
  transport::SocketCallbacks accept(const Address& at, transport::Socket s, const transport::Hello& hello);
  void from_server(Chain& c, const transport::Record& r);
  void from_wan(Chain& c, const transport::Record& r);
  void flush(Chain& c);
  void wan_acked(Chain& c, std::uint64_t cumulative);
  void leg_closed(Chain& c, int leg);
  void chain_error(Chain& c);
  std::uint64_t wan_length(const transport::Record& r) const;
  void learn_chunks(ChunkStore& store, std::uint64_t& watermark, const transport::Record& r);

  transport::TransportLayer& tl_;
  ProxyPairSpec spec_;
  ChunkStore near_store_;
  ChunkStore far_store_;
  std::uint64_t near_watermark_ = 0;
  std::uint64_t far_watermark_ = 0;
  std::uint64_t next_chain_ = 1;
  std::map<std::uint64_t, std::unique_ptr<Chain>> chains_;
  std::set<Address> listening_;
  ProxyStats stats_;
  std::shared_ptr<bool> alive_;
};

// Splices the pair into the session's active path by rebinding the session
// onto a proxied channel. Throws AccelError when the proxies are not on path.
void insert_pair(session::Session& s, ProxyPair& pair);
// Rebinds the session back onto a direct channel.
void remove_pair(session::Session& s, session::SessionLayer& layer);

}  // namespace wansim::accel
