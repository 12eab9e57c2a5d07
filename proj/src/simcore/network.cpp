#include "wansim/simcore/network.hpp"

namespace wansim {

Network::Network(Engine& engine, Topology topology)
    : engine_(engine), topology_(std::move(topology)), links_(topology_.link_count()) {
  for (std::size_t i = 0; i < links_.size(); ++i) {
    links_[i].delay = topology_.link(LinkId{static_cast<std::uint32_t>(i)}).one_way_delay;
  }
}

void Network::bind(const Address& addr, FrameHandler handler) {
  handlers_[addr] = std::move(handler);
}

void Network::unbind(const Address& addr) { handlers_.erase(addr); }

const std::shared_ptr<const std::vector<Hop>>& Network::route_for(const Address& src,
                                                                  const Address& dst) {
  auto key = std::make_pair(src, dst);
  auto it = routes_.find(key);
  if (it == routes_.end()) {
    it = routes_.emplace(key, std::make_shared<const std::vector<Hop>>(topology_.route(src, dst))).first;
  }
  return it->second;
}

std::uint64_t Network::send(Frame frame) {
  auto route = route_for(frame.src, frame.dst);
  frame.id = next_frame_id_++;
  ++counters_.injected;
  const std::uint64_t id = frame.id;
  enter_link(std::make_shared<Transit>(Transit{std::move(frame), std::move(route), 0}));
  return id;
}

void Network::enter_link(std::shared_ptr<Transit> t) {
  const Hop& hop = (*t->route)[t->hop];
  LinkState& ls = links_[hop.link.value];
  if (ls.pending_loss > 0) {
    --ls.pending_loss;
    ++counters_.dropped_loss;
    return;
  }
  const auto dir = static_cast<std::size_t>(hop.dir);
  const SimTime start = std::max(engine_.now(), ls.busy_until[dir]);
  const SimTime done = start + serialization_time(t->frame.wire_bytes, topology_.link(hop.link).rate_bps);
  ls.busy_until[dir] = done;
  ls.bytes[dir] += t->frame.wire_bytes;
  auto& act = ls.activity[dir];
  if (!act.empty() && act.back().end == start) {
    act.back().end = done;
  } else {
    act.push_back({start, done});
  }
  engine_.schedule(done + ls.delay, EventKind::FrameArrival, "frame.arrive",
                   [this, t = std::move(t)]() mutable { arrive(std::move(t)); });
}

void Network::arrive(std::shared_ptr<Transit> t) {
  if (++t->hop < t->route->size()) {
    enter_link(std::move(t));
    return;
  }
  auto it = handlers_.find(t->frame.dst);
  if (it == handlers_.end()) {
    ++counters_.dropped_unbound;
    return;
  }
  ++counters_.delivered;
  // Copy the handler: it may unbind itself.
  FrameHandler handler = it->second;
  handler(t->frame);
}

void Network::set_link_delay(LinkId link, SimTime delay) {
  if (link.value >= links_.size()) throw SimError("unknown link " + std::to_string(link.value));
  if (delay < SimTime{}) throw SimError("negative link delay");
  links_[link.value].delay = delay;
}

SimTime Network::link_delay(LinkId link) const {
  if (link.value >= links_.size()) throw SimError("unknown link " + std::to_string(link.value));
  return links_[link.value].delay;
}

void Network::inject_loss(LinkId link, std::uint32_t frames) {
  if (link.value >= links_.size()) throw SimError("unknown link " + std::to_string(link.value));
  links_[link.value].pending_loss += frames;
}

const std::vector<Interval>& Network::link_activity(LinkId link, Direction dir) const {
  if (link.value >= links_.size()) throw SimError("unknown link " + std::to_string(link.value));
  return links_[link.value].activity[static_cast<std::size_t>(dir)];
}

std::uint64_t Network::link_bytes(LinkId link, Direction dir) const {
  if (link.value >= links_.size()) throw SimError("unknown link " + std::to_string(link.value));
  return links_[link.value].bytes[static_cast<std::size_t>(dir)];
}

IntervalSet Network::link_busy(LinkId link) const {
  std::vector<Interval> all = link_activity(link, Direction::Forward);
  const auto& rev = link_activity(link, Direction::Reverse);
  all.insert(all.end(), rev.begin(), rev.end());
  return IntervalSet(std::move(all));
}

IntervalSet Network::node_busy(NodeId node) const {
  IntervalSet busy;
  for (LinkId l : topology_.links_of(node)) busy = busy.unite(link_busy(l));
  return busy;
}

}  // namespace wansim
