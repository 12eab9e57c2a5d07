#include "wansim/simcore/topology.hpp"

#include <deque>
#include <set>

namespace wansim {

std::string to_string(const Address& a) {
  return std::to_string(a.node.value) + ":" + std::to_string(a.iface);
}

Topology Topology::build(std::span<const LinkSpec> specs, std::map<NodeId, std::string> names) {
  Topology t;
  t.names_ = std::move(names);
  std::set<std::pair<NodeId, NodeId>> node_pairs;
  for (const LinkSpec& s : specs) {
    const LinkId id{static_cast<std::uint32_t>(t.links_.size())};
    if (s.rate_bps == 0) throw SimError("link " + std::to_string(id.value) + ": rate must be positive");
    if (s.one_way_delay < SimTime{}) throw SimError("link " + std::to_string(id.value) + ": negative delay");
    if (s.a == s.b) throw SimError("link " + std::to_string(id.value) + ": endpoints are identical");
    for (const Address& end : {s.a, s.b}) {
      if (t.by_address_.contains(end)) {
        throw SimError("duplicate address " + to_string(end) + " on link " + std::to_string(id.value));
      }
    }
    t.by_address_[s.a] = id;
    t.by_address_[s.b] = id;
    t.adjacency_[s.a.node].push_back(id);
    t.adjacency_[s.b.node].push_back(id);
    t.links_.push_back(s);
  }
  return t;
}

const LinkSpec& Topology::link(LinkId id) const {
  if (id.value >= links_.size()) throw SimError("unknown link " + std::to_string(id.value));
  return links_[id.value];
}

std::optional<LinkId> Topology::link_of(const Address& addr) const {
  auto it = by_address_.find(addr);
  if (it == by_address_.end()) return std::nullopt;
  return it->second;
}

std::vector<LinkId> Topology::links_of(NodeId node) const {
  auto it = adjacency_.find(node);
  return it == adjacency_.end() ? std::vector<LinkId>{} : it->second;
}

std::vector<NodeId> Topology::nodes() const {
  std::vector<NodeId> out;
  for (const auto& [n, _] : adjacency_) out.push_back(n);
  return out;
}

namespace {

Hop make_hop(const LinkSpec& spec, LinkId id, NodeId leaving) {
  if (spec.a.node == leaving) return Hop{id, Direction::Forward, spec.a, spec.b};
  return Hop{id, Direction::Reverse, spec.b, spec.a};
}

}  // namespace

std::vector<Hop> Topology::route(const Address& src, const Address& dst) const {
  if (src.node == dst.node) throw RouteError("source and destination share node " + to_string(src));
  auto first = link_of(src);
  if (!first) throw RouteError("address " + to_string(src) + " is not attached to any link");
  if (!adjacency_.contains(dst.node)) throw RouteError("node of " + to_string(dst) + " is not in the topology");

  const LinkSpec& first_spec = links_[first->value];
  std::vector<Hop> path{make_hop(first_spec, *first, src.node)};
  const NodeId start = path.front().to.node;
  if (start == dst.node) return path;

  // Breadth-first search over nodes; links are expanded in id order so ties
  // resolve deterministically.
  std::map<NodeId, LinkId> came_by;
  std::deque<NodeId> frontier{start};
  came_by[start] = *first;
  bool found = false;
  while (!frontier.empty() && !found) {
    const NodeId n = frontier.front();
    frontier.pop_front();
    for (LinkId l : adjacency_.at(n)) {
      const LinkSpec& s = links_[l.value];
      const NodeId peer = s.a.node == n ? s.b.node : s.a.node;
      if (peer == src.node || came_by.contains(peer)) continue;
      came_by[peer] = l;
      if (peer == dst.node) {
        found = true;
        break;
      }
      frontier.push_back(peer);
    }
  }
  if (!found) throw RouteError("no route from " + to_string(src) + " to " + to_string(dst));

  std::vector<Hop> tail;
  for (NodeId n = dst.node; n != start;) {
    const LinkId l = came_by.at(n);
    const LinkSpec& s = links_[l.value];
    const NodeId prev = s.a.node == n ? s.b.node : s.a.node;
    tail.push_back(make_hop(s, l, prev));
    n = prev;
  }
  path.insert(path.end(), tail.rbegin(), tail.rend());
  return path;
}

SimTime Topology::path_rtt(const Address& src, const Address& dst, std::uint32_t frame_bytes) const {
  SimTime one_way;
  for (const Hop& h : route(src, dst)) {
    const LinkSpec& s = links_[h.link.value];
    one_way += s.one_way_delay;
    if (frame_bytes > 0) one_way += serialization_time(frame_bytes, s.rate_bps);
  }
  return one_way * 2;
}

std::string Topology::node_name(NodeId id) const {
  auto it = names_.find(id);
  return it != names_.end() ? it->second : "n" + std::to_string(id.value);
}

std::optional<NodeId> Topology::node_by_name(const std::string& name) const {
  for (const auto& [id, n] : names_) {
    if (n == name) return id;
  }
  return std::nullopt;
}

}  // namespace wansim
