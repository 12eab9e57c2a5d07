#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <vector>

#include "wansim/simcore/engine.hpp"
#include "wansim/simcore/interval_set.hpp"
#include "wansim/simcore/topology.hpp"

namespace wansim {

// Base for whatever an upper layer carries inside a frame.
struct FramePayload {
  virtual ~FramePayload() = default;
};

struct Frame {
  Address src;
  Address dst;
  std::uint32_t wire_bytes = 0;
  std::shared_ptr<const FramePayload> payload;
  std::uint64_t id = 0;  // assigned by Network::send
};

using FrameHandler = std::function<void(const Frame&)>;

struct NetworkCounters {
  std::uint64_t injected = 0;
  std::uint64_t delivered = 0;
  std::uint64_t dropped_loss = 0;     // configured loss events
  std::uint64_t dropped_unbound = 0;  // nothing bound at the destination
  std::uint64_t dropped() const { return dropped_loss + dropped_unbound; }
};

// Store-and-forward packet network over a Topology. Each link direction is an
// independent FIFO: a frame starts serializing when the direction is free and
// arrives one propagation delay after its last bit leaves. The delay a frame
// sees is fixed when it enters the link.
class Network {
 public:
  Network(Engine& engine, Topology topology);
  Network(const Network&) = delete;
  Network& operator=(const Network&) = delete;

  Engine& engine() { return engine_; }
  const Topology& topology() const { return topology_; }

  void bind(const Address& addr, FrameHandler handler);
  void unbind(const Address& addr);
  bool bound(const Address& addr) const { return handlers_.contains(addr); }

  // Throws RouteError when the destination is unreachable.
  std::uint64_t send(Frame frame);

  void set_link_delay(LinkId link, SimTime delay);
  SimTime link_delay(LinkId link) const;
  // Drops the next `frames` frames that enter `link` in either direction.
  void inject_loss(LinkId link, std::uint32_t frames);

  const NetworkCounters& counters() const { return counters_; }
  std::uint64_t in_flight() const {
    return counters_.injected - counters_.delivered - counters_.dropped();
  }

  // Serialization intervals per link direction, in transmission order.
  const std::vector<Interval>& link_activity(LinkId link, Direction dir) const;
  IntervalSet link_busy(LinkId link) const;
  // Wire bytes that entered `link` in direction `dir`, including headers.
  std::uint64_t link_bytes(LinkId link, Direction dir) const;
  IntervalSet node_busy(NodeId node) const;

 private:
  struct LinkState {
    SimTime delay;
    SimTime busy_until[2];
    std::uint32_t pending_loss = 0;
    std::vector<Interval> activity[2];
    std::uint64_t bytes[2] = {0, 0};
  };
  struct Transit {
    Frame frame;
    std::shared_ptr<const std::vector<Hop>> route;
    std::size_t hop = 0;
  };

  const std::shared_ptr<const std::vector<Hop>>& route_for(const Address& src, const Address& dst);
  void enter_link(std::shared_ptr<Transit> t);
  void arrive(std::shared_ptr<Transit> t);

  Engine& engine_;
  Topology topology_;
  std::vector<LinkState> links_;
  std::map<Address, FrameHandler> handlers_;
  std::map<std::pair<Address, Address>, std::shared_ptr<const std::vector<Hop>>> routes_;
  NetworkCounters counters_;
  std::uint64_t next_frame_id_ = 1;
};

}  // namespace wansim
