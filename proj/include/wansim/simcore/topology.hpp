#pragma once

#include <compare>
#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "wansim/simcore/time.hpp"

namespace wansim {

struct NodeId {
  std::uint32_t value = 0;
  auto operator<=>(const NodeId&) const = default;
};

struct LinkId {
  std::uint32_t value = 0;
  auto operator<=>(const LinkId&) const = default;
};

// One interface on one node. A node owning several addresses is multi-homed.
struct Address {
  NodeId node;
  std::uint16_t iface = 0;
  auto operator<=>(const Address&) const = default;
};

std::string to_string(const Address& a);

struct LinkSpec {
  Address a;
  Address b;
  SimTime one_way_delay;
  BitRate rate_bps = 0;
};

// Link direction: Forward carries frames from spec.a to spec.b.
enum class Direction : std::uint8_t { Forward = 0, Reverse = 1 };

struct Hop {
  LinkId link;
  Direction dir = Direction::Forward;
  Address from;
  Address to;
};

class RouteError : public SimError {
 public:
  using SimError::SimError;
};

// Immutable point-to-point topology. Every address terminates exactly one
// link. Routing pins the first hop to the source address's link (source
// address selection) and accepts arrival at the destination node over any of
// its interfaces.
class Topology {
 public:
  Topology() = default;

  // Throws SimError on a duplicate address, a self-loop, or a non-positive rate.
  static Topology build(std::span<const LinkSpec> specs, std::map<NodeId, std::string> names = {});

  std::size_t link_count() const { return links_.size(); }
  std::size_t node_count() const { return adjacency_.size(); }
  const LinkSpec& link(LinkId id) const;
  std::optional<LinkId> link_of(const Address& addr) const;
  std::vector<LinkId> links_of(NodeId node) const;
  std::vector<NodeId> nodes() const;

  // Throws RouteError when no path exists or src and dst share a node.
  std::vector<Hop> route(const Address& src, const Address& dst) const;
  // Sum of propagation delays plus per-hop serialization of `frame_bytes`,
  // there and back.
  SimTime path_rtt(const Address& src, const Address& dst, std::uint32_t frame_bytes = 0) const;

  std::string node_name(NodeId id) const;
  std::optional<NodeId> node_by_name(const std::string& name) const;

 private:
  std::vector<LinkSpec> links_;
  std::map<Address, LinkId> by_address_;
  std::map<NodeId, std::vector<LinkId>> adjacency_;
  std::map<NodeId, std::string> names_;
};

}  // namespace wansim
