#include "wansim/migration/orchestrator.hpp"

namespace wansim::migration {

using session::ProtocolError;
using session::Session;

void VmSpec::validate(const Topology& topo) const {
  if (vm_id.empty()) throw MigrationError("VM needs an id");
  if (current_addr == alternate_addr) throw MigrationError("VM " + vm_id + ": alternate address equals current");
  if (!topo.link_of(current_addr) || !topo.link_of(alternate_addr)) {
    throw MigrationError("VM " + vm_id + ": address not attached to the topology");
  }
}

Orchestrator::Orchestrator(session::SessionLayer& layer) : layer_(layer) {}

MigrationHandle Orchestrator::schedule_migration(const VmSpec& vm, const MigrationEvent& ev, Session& sess) {
  Engine& eng = layer_.engine();
  Network& net = layer_.transport().network();
  vm.validate(net.topology());
  if (ev.vm_id != vm.vm_id) throw MigrationError("migration event names VM " + ev.vm_id + ", spec is " + vm.vm_id);
  if (ev.destination != vm.alternate_addr.node) throw MigrationError("destination host does not own the alternate address");
  if (ev.duration < SimTime{} || ev.notify_lag < SimTime{} || ev.downtime < SimTime{}) {
    throw MigrationError("migration timings must be non-negative");
  }
  if (ev.lead() < SimTime{} || ev.lead() > ev.duration) throw MigrationError("announce must fall inside the migration");
  if (ev.downtime > ev.duration) throw MigrationError("downtime longer than the migration");
  if (ev.start_at < eng.now()) throw MigrationError("migration starts in the past");
  if (sess.server_addr() != vm.current_addr) throw MigrationError("session is not bound to the VM's current address");
  for (const PathDelayChange& c : ev.delay_changes) {
    if (c.link.value >= net.topology().link_count()) throw MigrationError("delay change names an unknown link");
  }
  for (std::size_t i = 0; i < records_.size(); ++i) {
    const MigrationRecord& r = records_[i];
    if (r.vm_id != vm.vm_id || r.cancelled || !r.error.empty()) continue;
    if (ev.start_at <= r.completion && r.start_at <= ev.completion()) {
      throw MigrationError("overlapping migration for VM " + vm.vm_id);
    }
  }

  const std::uint64_t id = records_.size();
  records_.push_back({id, vm.vm_id, ev.start_at, ev.completion(), {}, {}, {}, false, {}});
  pending_.push_back({});
  vm_addr_.emplace(vm.vm_id, vm.current_addr);
  layer_.serve(vm.alternate_addr);

  Session* s = &sess;
  auto guarded = [this, id](auto fn) {
    return [this, id, fn] {
      try {
        fn();
      } catch (const ProtocolError& e) {
        records_[id].error = e.what();
      }
    };
  };
  auto& events = pending_[id].events;
  events.push_back(eng.schedule(ev.completion() - ev.lead(), EventKind::Control, "migration.announce",
                                guarded([this, id, s, vm] {
                                  records_[id].announced = layer_.engine().now();
                                  s->announce_new_address(vm.alternate_addr);
                                })));
  if (ev.downtime > SimTime{}) {
    events.push_back(eng.schedule(ev.completion() - ev.downtime, EventKind::Control, "migration.pause",
                                  [s] { s->pause_sender(); }));
  }
  events.push_back(eng.schedule(ev.completion(), EventKind::Control, "migration.complete",
                                [this, id, s, vm, changes = ev.delay_changes, pause = ev.downtime > SimTime{}] {
                                  Network& n = layer_.transport().network();
                                  records_[id].completed = layer_.engine().now();
                                  vm_addr_[vm.vm_id] = vm.alternate_addr;
                                  for (const PathDelayChange& c : changes) n.set_link_delay(c.link, c.one_way_delay);
                                  layer_.engine().trace("migration", "COMPLETE", id);
                                  if (pause) s->resume_sender();
                                }));
  events.push_back(eng.schedule(ev.completion() + ev.notify_lag, EventKind::Control, "migration.notify",
                                guarded([this, id, s] {
                                  records_[id].signalled = layer_.engine().now();
                                  pending_[id].done = true;
                                  s->signal_migration_complete();
                                })));
  return {id};
}

void Orchestrator::cancel(MigrationHandle h) {
  if (h.id >= records_.size()) throw MigrationError("unknown migration");
  if (pending_[h.id].done || records_[h.id].cancelled) return;
  Engine& eng = layer_.engine();
  for (EventHandle e : pending_[h.id].events) eng.cancel(e);
  records_[h.id].cancelled = true;
  eng.trace("migration", "CANCELLED", h.id);
}

const MigrationRecord& Orchestrator::record(MigrationHandle h) const {
  if (h.id >= records_.size()) throw MigrationError("unknown migration");
  return records_[h.id];
}

std::optional<Address> Orchestrator::vm_address(const std::string& vm_id) const {
  auto it = vm_addr_.find(vm_id);
  if (it == vm_addr_.end()) return std::nullopt;
  return it->second;
}

std::shared_ptr<const HookOutcome> post_migration_hook(Session& sess, session::SessionLayer& layer,
                                                       accel::ProxyPair& pair) {
  return post_migration_hook(sess, layer, pair, pair.spec().policy);
}

std::shared_ptr<const HookOutcome> post_migration_hook(Session& sess, session::SessionLayer& layer,
                                                       accel::ProxyPair& pair, accel::AcceleratorPolicy policy) {
  policy.validate();
  auto outcome = std::make_shared<HookOutcome>();
  sess.set_handover_strategy([&layer, &pair, policy, outcome](Session& s) {
    const Address client = s.handover_client_addr();
    const Address server = *s.announced();
    // Hold the switch until the measurement has been acted upon.
    s.set_auto_switch(false);
    s.on_standby_rtt = [&s, &layer, &pair, policy, outcome, client, server](SimTime rtt) {
      s.on_standby_rtt = nullptr;
      s.set_auto_switch(true);
      outcome->decided = true;
      outcome->measured_rtt = rtt;
      outcome->decision = accel::evaluate_policy(policy, rtt, false);
      layer.engine().trace("accel", accel::to_string(outcome->decision), s.id(), rtt.us());
      if (outcome->decision == accel::Decision::Insert && pair.on_path(client, server)) {
        s.discard_standby();
        s.open_standby(client, pair.connector());
        outcome->inserted = &pair;
      }
    };
    s.open_standby(client, layer.direct_connector());
  });
  return outcome;
}

}  // namespace wansim::migration
