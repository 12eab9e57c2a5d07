#pragma once

#include <compare>
#include <cstdint>
#include <deque>
#include <functional>
#include <limits>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "wansim/simcore/network.hpp"

namespace wansim::transport {

struct ConnectionId {
  std::uint64_t value = 0;
  auto operator<=>(const ConnectionId&) const = default;
};

enum class Side : std::uint8_t { Active, Passive };

// One end of a connection.
struct Socket {
  ConnectionId conn;
  Side side = Side::Active;
  auto operator<=>(const Socket&) const = default;
};

inline Socket active(ConnectionId c) { return {c, Side::Active}; }
inline Socket passive(ConnectionId c) { return {c, Side::Passive}; }

struct TransportConfig {
  std::uint32_t mss = 1460;
  std::uint32_t header_bytes = 40;
  // Receive window this endpoint advertises. 64 KiB is classic TCP without
  // window scaling.
  std::uint64_t rwnd_cap_bytes = 64 * 1024;
  std::uint32_t initial_cwnd_segments = 2;
  std::uint64_t ssthresh_bytes = std::numeric_limits<std::uint64_t>::max();
  // Spaces data segments so that wire bytes leave at no more than this rate.
  std::optional<BitRate> pacing_bps;
  bool trace_cwnd = false;
};

void validate(const TransportConfig& cfg);

enum class Phase : std::uint8_t { Handshake, SlowStart, CongestionAvoidance, Closed };

struct ConnectionState {
  Address local;
  Address remote;
  std::uint64_t cwnd_bytes = 0;
  std::uint64_t ssthresh_bytes = 0;
  std::uint64_t rwnd_cap_bytes = 0;  // advertised by this end
  std::uint64_t peer_rwnd_bytes = 0;
  SimTime srtt;
  bool has_rtt_sample = false;
  std::uint64_t send_next = 0;
  std::uint64_t ack_next = 0;
  std::uint64_t buffered_end = 0;  // bytes written by the application
  std::uint64_t rcv_next = 0;
  std::uint64_t held_bytes = 0;  // delivered but not yet consumed by the application
  Phase phase = Phase::Handshake;
  bool established = false;
  bool closing = false;
  std::optional<SimTime> established_at;
};

// Opaque upper-layer content riding in the byte stream.
struct RecordBody {
  virtual ~RecordBody() = default;
};

// A message-boundary marker in the byte stream. The transport only accounts
// for `length`; `body` travels with the last byte of the record.
struct Record {
  std::uint64_t length = 0;
  std::shared_ptr<const RecordBody> body;
};

struct SocketCallbacks {
  std::function<void()> on_established;
  std::function<void(const Record&)> on_record;
  // Cumulative bytes acknowledged by the peer.
  std::function<void(std::uint64_t)> on_acked;
  std::function<void()> on_closed;
  std::function<void(const std::string&)> on_error;
};

using Hello = std::shared_ptr<const RecordBody>;
using AcceptHandler = std::function<SocketCallbacks(Socket, const Hello&)>;

struct TransferReport {
  std::uint64_t id = 0;
  std::uint64_t bytes_requested = 0;
  std::uint64_t bytes_delivered = 0;
  SimTime started;
  SimTime finished;
  bool complete = false;
};

struct TransferHandle {
  std::uint64_t id = 0;
};

class TransportError : public SimError {
 public:
  using SimError::SimError;
};

// Simplified reliable windowed byte stream (the TCP stand-in). Window limited
// by min(cwnd, peer receive window); slow start doubles cwnd per RTT,
// congestion avoidance adds one segment per RTT; no loss recovery.
class TransportLayer {
 public:
  explicit TransportLayer(Network& net);
  ~TransportLayer();
  TransportLayer(const TransportLayer&) = delete;
  TransportLayer& operator=(const TransportLayer&) = delete;

  Network& network() { return net_; }
  Engine& engine() { return net_.engine(); }

  void listen(const Address& addr, TransportConfig cfg, AcceptHandler on_accept);
  void unlisten(const Address& addr);

  // Starts a three-way handshake. The passive side is usable after 1.5 RTT.
  // Throws TransportError for a self-connection and RouteError without a route.
  ConnectionId connect(const Address& src, const Address& dst, TransportConfig cfg,
                       SocketCallbacks callbacks, Hello hello = {});

  void write(Socket s, Record record);
  // Graceful: queued data is flushed before the FIN. Idempotent.
  void close(Socket s);
  // Drops queued data and resets the peer.
  void abort(Socket s);
  void set_callbacks(Socket s, SocketCallbacks callbacks);
  // Bytes already delivered that the application still holds. They shrink
  // the advertised receive window; a window update is sent when it reopens.
  void set_receive_held(Socket s, std::uint64_t held_bytes);

  bool exists(Socket s) const;
  const ConnectionState& state(Socket s) const;
  // Written but not yet acknowledged.
  std::uint64_t backlog(Socket s) const;

  // Sends `bytes` as MSS-sized records; completion fires when the peer has
  // received the last byte, or with a partial report if the connection dies.
  TransferHandle send(Socket s, std::uint64_t bytes, std::function<void(const TransferReport&)> on_done);

  // Echo round trip between two addresses. Reports nullopt after `timeout`.
  void probe_rtt(const Address& src, const Address& dst, std::function<void(std::optional<SimTime>)> done,
                 SimTime timeout = SimTime::seconds(30));

  std::uint64_t data_segments_sent() const { return data_segments_sent_; }

 private:
  struct Endpoint;
  struct Segment;
  struct Transfer;

  using EndpointKey = std::pair<std::uint64_t, Address>;

  Endpoint& endpoint(Socket s);
  const Endpoint& endpoint(Socket s) const;
  void ensure_bound(const Address& addr);
  void on_frame(const Address& local, const Frame& frame);
  void transmit(Endpoint& ep, std::shared_ptr<Segment> seg, std::uint32_t payload_bytes);
  void try_send(Endpoint& ep);
  void handle_ack(Endpoint& ep, const Segment& seg);
  void handle_data(Endpoint& ep, const Segment& seg);
  void become_established(Endpoint& ep);
  void finish(Endpoint& ep, bool error, const std::string& why);
  void note_delivery(Endpoint& ep, const Record& r);
  void rtt_sample(Endpoint& ep, SimTime sample);
  static std::uint64_t advertised(Endpoint& ep);

  Network& net_;
  std::uint64_t next_conn_ = 1;
  std::uint64_t next_transfer_ = 1;
  std::uint64_t next_probe_ = 1;
  std::uint64_t data_segments_sent_ = 0;
  std::map<EndpointKey, std::unique_ptr<Endpoint>> endpoints_;
  std::map<Socket, Endpoint*> sockets_;
  struct Listener {
    TransportConfig cfg;
    AcceptHandler on_accept;
  };
  std::map<Address, Listener> listeners_;
  std::map<std::uint64_t, std::unique_ptr<Transfer>> transfers_;
  struct PendingProbe {
    std::function<void(std::optional<SimTime>)> done;
    SimTime sent;
    EventHandle timeout;
  };
  std::map<std::uint64_t, PendingProbe> probes_;
};

// min(link_rate, window * 8 / rtt) in bits/s. `link_rate` nullopt means
// unbounded; rtt == 0 with an unbounded rate is rejected.
double steady_state_throughput(std::uint64_t rwnd_cap_bytes, SimTime rtt, std::optional<BitRate> link_rate);

}  // namespace wansim::transport
