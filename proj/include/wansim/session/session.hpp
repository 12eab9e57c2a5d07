#pragma once

#include <cstdint>
#include <functional>
#include <deque>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "wansim/session/framing.hpp"
#include "wansim/session/ledger.hpp"
#include "wansim/transport/transport.hpp"

namespace wansim::session {

using SessionId = std::uint64_t;

enum class HandoverPhase : std::uint8_t { Established, NewAddrKnown, MigrationComplete, NewConnOpening, Switched };
inline constexpr int kHandoverPhaseCount = 5;

std::string_view to_string(HandoverPhase p);
// Forward order plus Switched -> Established. NewConnOpening -> Established
// is also allowed: it is the rollback taken when the new connection fails.
bool is_legal_transition(HandoverPhase from, HandoverPhase to);

enum class ControlKind : std::uint8_t { NewAddrNotify, MigrationComplete, SetPrimary, CloseOld };
std::string_view to_string(ControlKind k);

struct ControlMessage {
  ControlKind kind = ControlKind::NewAddrNotify;
  std::optional<Address> new_addr;
  SessionId session_id = 0;
  SimTime at;
};

class ProtocolError : public SimError {
 public:
  using SimError::SimError;
};

// Carried in the SYN of every session connection.
struct SessionHello : transport::RecordBody {
  SessionId session_id = 0;
  std::uint64_t channel = 0;
  std::uint64_t resume_from = 0;
};

// One framed session record on the byte stream. `payload` is the number of
// application bytes; the record occupies payload + kFrameHeaderBytes on the wire.
struct SessionRecord : transport::RecordBody {
  FrameHeader header;
  std::uint64_t payload = 0;
  // Opaque tag that proxies may attach; never interpreted by the session.
  std::shared_ptr<const transport::RecordBody> attachment;
};

struct HandoverReport {
  SimTime started;   // MIGRATION_COMPLETE, or the start of a rebind
  SimTime switched;  // SET_PRIMARY
  SimTime duration() const { return switched - started; }
  std::uint64_t resume_from = 0;
  std::uint64_t bytes_retransmitted = 0;
  bool rebind = false;
};

// Everything a connector needs to build the data path for one channel.
struct ConnectRequest {
  Address client;
  Address server;
  transport::TransportConfig client_cfg;
  transport::Hello hello;
  transport::SocketCallbacks client_callbacks;
};

struct ChannelHandle {
  transport::Socket client;
  // False when something between the endpoints acknowledges data on the
  // client's behalf; the session then never treats transport acks as proof
  // of delivery.
  bool end_to_end_acks = true;
};

// Opens a channel and returns the client-side socket. The server-side socket
// arrives later through the session listener. Must throw on a synchronous
// failure (no route) and report asynchronous ones via on_error.
using Connector = std::function<ChannelHandle(const ConnectRequest&)>;

struct SessionConfig {
  transport::TransportConfig transport;
  // Upper bound on bytes queued but unacknowledged on one socket. The queue
  // is also held to sndbuf_windows times the socket's current send window so
  // that a freshly opened channel does not commit data far ahead of its cwnd.
  std::uint64_t sndbuf_bytes = 256 * 1024;
  std::uint32_t sndbuf_windows = 4;
  // Application bytes per record; default fills one MSS with the header.
  std::uint32_t record_payload = 1460 - kFrameHeaderBytes;
};

struct WriteOptions {
  // Application production rate; unset means all bytes are available at once.
  std::optional<BitRate> app_rate_bps;
};

class SessionLayer;

class Session {
 public:
  using StrategyFn = std::function<void(Session&)>;

  SessionId id() const { return id_; }
  HandoverPhase phase() const { return phase_; }
  bool ready() const;
  bool failed() const { return failed_; }
  const std::string& failure() const { return failure_; }

  const std::vector<Address>& client_addrs() const { return client_addrs_; }
  const std::vector<Address>& server_addrs() const { return server_addrs_; }
  Address client_addr() const;
  Address server_addr() const;
  std::optional<Address> announced() const { return announced_; }

  // Primary channel sockets, for inspection.
  transport::Socket primary_client_socket() const;
  std::optional<transport::Socket> primary_server_socket() const;
  bool has_standby() const { return standby_.has_value(); }

  // Server application hands `bytes` more bytes to the session (data flows
  // server to client).
  void write(std::uint64_t bytes, WriteOptions opts = {});
  // Stop-and-copy style pause of the server application.
  void pause_sender();
  void resume_sender();

  void announce_new_address(const Address& addr);
  void signal_migration_complete();
  // Opens the standby channel from `client` to the announced address through
  // `connector`. Called by the handover strategy while NewConnOpening.
  void open_standby(const Address& client, const Connector& connector);
  // Aborts a standby channel without touching the handover phase, so the
  // strategy can open a different one.
  void discard_standby();
  // Client address a handover moves to: the other one when dual-homed.
  Address handover_client_addr() const;
  // Promotes the standby channel. Throws ProtocolError if it is not open.
  HandoverReport switch_primary();
  // Replaces the primary channel on the current address pair, e.g. to splice
  // proxies in or out. Switches automatically once the new channel is open.
  void rebind(const Connector& connector);

  // Replaces the default handover behaviour (direct connect from the second
  // client address). Runs when NewConnOpening is entered.
  void set_handover_strategy(StrategyFn fn) { strategy_ = std::move(fn); }
  // Switch as soon as the standby is usable (default on).
  void set_auto_switch(bool on) { auto_switch_ = on; }

  const DeliveryLedger& deliver_stream() const { return ledger_; }
  std::uint64_t stream_written() const { return written_; }
  std::uint64_t stream_sent() const { return stream_sent_; }
  std::uint64_t stream_delivered() const { return ledger_.delivered(); }
  std::uint64_t duplicate_bytes() const { return duplicate_bytes_; }
  std::uint64_t records_sent() const { return records_sent_; }
  // Highest session offset the client is known to hold, as seen by the server.
  std::uint64_t session_acked() const { return session_acked_; }
  // Bytes sent more than once on the wire over the session's lifetime.
  std::uint64_t bytes_resent() const { return bytes_resent_; }
  const std::vector<HandoverReport>& handovers() const { return handovers_; }
  const std::vector<ControlMessage>& control_log() const { return control_log_; }
  std::optional<SimTime> first_send() const { return first_send_; }
  std::optional<SimTime> completed_at() const { return completed_at_; }
  std::optional<SimTime> ready_at() const { return ready_at_; }

  std::function<void()> on_ready;
  std::function<void(const HandoverReport&)> on_handover;
  std::function<void(SimTime)> on_complete;
  std::function<void(const std::string&)> on_failure;
  // Handshake RTT of a standby channel, seen from the client side.
  std::function<void(SimTime)> on_standby_rtt;

 private:
  friend class SessionLayer;

  struct Channel {
    std::uint64_t token = 0;
    Address client;
    Address server;
    transport::Socket client_sock;
    std::optional<transport::Socket> server_sock;
    bool server_ready = false;
    bool dead = false;
    bool end_to_end_acks = true;
    std::uint64_t resume_from = 0;
    // Transport offset at which each written record ends, with its session end.
    std::deque<std::pair<std::uint64_t, std::uint64_t>> unacked;
    std::uint64_t transport_written = 0;
  };

  Session(SessionLayer& layer, SessionId id, SessionConfig cfg);

  Engine& engine();
  transport::TransportLayer& tl();
  void set_phase(HandoverPhase to);
  void log_control(ControlKind k, std::optional<Address> addr);
  void trace(std::string name, std::int64_t value = 0);

  void open_channel(Channel& ch, const Connector& connector);
  transport::SocketCallbacks client_callbacks(std::uint64_t token);
  transport::SocketCallbacks attach_server(transport::Socket s, const SessionHello& hello);
  Channel* channel(std::uint64_t token);
  Channel* any_channel(std::uint64_t token);
  void on_server_acked(std::uint64_t token, std::uint64_t cumulative);
  void on_server_ready(std::uint64_t token);
  void on_client_record(std::uint64_t token, const transport::Record& r);
  void on_channel_error(std::uint64_t token, const std::string& why);
  void fail(const std::string& why);

  std::uint64_t available(SimTime now) const;
  void pump();
  void check_complete();

  SessionLayer& layer_;
  SessionId id_;
  SessionConfig cfg_;
  HandoverPhase phase_ = HandoverPhase::Established;
  bool failed_ = false;
  std::string failure_;
  std::vector<Address> client_addrs_;
  std::vector<Address> server_addrs_;
  std::optional<Address> announced_;
  std::optional<Channel> primary_;
  std::optional<Channel> standby_;
  std::vector<Channel> retired_;
  std::uint64_t next_token_ = 1;
  bool rebinding_ = false;
  bool auto_switch_ = true;
  SimTime handover_started_;
  StrategyFn strategy_;

  // Sender.
  std::uint64_t written_ = 0;
  std::uint64_t next_seq_ = 0;
  std::uint64_t stream_sent_ = 0;
  std::uint64_t records_sent_ = 0;
  std::uint64_t session_acked_ = 0;
  std::uint64_t bytes_resent_ = 0;
  bool paused_ = false;
  struct Production {
    std::uint64_t base = 0;   // bytes available before this write
    std::uint64_t bytes = 0;
    SimTime start;
    std::optional<BitRate> rate;
  };
  std::vector<Production> productions_;
  std::optional<EventHandle> wake_;
  std::optional<SimTime> first_send_;

  // Receiver.
  DeliveryLedger ledger_;
  std::map<std::uint64_t, std::uint64_t> reorder_;  // seq -> end
  std::uint64_t duplicate_bytes_ = 0;
  std::optional<SimTime> completed_at_;
  std::optional<SimTime> ready_at_;

  std::vector<HandoverReport> handovers_;
  std::vector<ControlMessage> control_log_;
};

class SessionLayer {
 public:
  SessionLayer(transport::TransportLayer& tl, SessionConfig defaults = {});
  SessionLayer(const SessionLayer&) = delete;
  SessionLayer& operator=(const SessionLayer&) = delete;

  transport::TransportLayer& transport() { return tl_; }
  Engine& engine() { return tl_.engine(); }
  const SessionConfig& defaults() const { return defaults_; }

  // Accept session connections on a server address.
  void serve(const Address& server);
  bool serving(const Address& server) const;

  // Connects immediately; the session becomes ready once the server side of
  // the first channel is established. Throws RouteError when unroutable.
  Session& open_session(const Address& client, const Address& server, const Connector& connector = {});
  Session& open_session(const std::vector<Address>& client_addrs, const Address& server,
                        const Connector& connector = {});

  Session& session(SessionId id);
  std::size_t session_count() const { return sessions_.size(); }

  // Plain end-to-end transport connection.
  Connector direct_connector();

 private:
  friend class Session;
  transport::SocketCallbacks accept(transport::Socket s, const transport::Hello& hello);

  transport::TransportLayer& tl_;
  SessionConfig defaults_;
  SessionId next_id_ = 1;
  std::map<SessionId, std::unique_ptr<Session>> sessions_;
  std::map<Address, bool> serving_;
};

}  // namespace wansim::session
