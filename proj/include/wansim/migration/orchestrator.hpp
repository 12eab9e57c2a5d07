#pragma once

#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "wansim/accelerator/proxy.hpp"
#include "wansim/session/session.hpp"

namespace wansim::migration {

class MigrationError : public SimError {
 public:
  using SimError::SimError;
};

struct VmSpec {
  std::string vm_id;
  Address current_addr;
  Address alternate_addr;
  NodeId host;

  void validate(const Topology& topo) const;
};

struct PathDelayChange {
  LinkId link;
  SimTime one_way_delay;
};

struct MigrationEvent {
  std::string vm_id;
  SimTime start_at;
  SimTime duration;  // black box
  NodeId destination;
  // How long before completion the new address is announced; unset means
  // at migration start.
  std::optional<SimTime> announce_lead;
  // Delay between true completion and the client learning about it.
  SimTime notify_lag;
  // Stop-and-copy pause of the VM's sender, ending at completion.
  SimTime downtime;
  // Applied at completion.
  std::vector<PathDelayChange> delay_changes;

  SimTime completion() const { return start_at + duration; }
  SimTime lead() const { return announce_lead.value_or(duration); }
};

struct MigrationHandle {
  std::uint64_t id = 0;
};

struct MigrationRecord {
  std::uint64_t id = 0;
  std::string vm_id;
  SimTime start_at;
  SimTime completion;
  std::optional<SimTime> announced;
  std::optional<SimTime> completed;
  std::optional<SimTime> signalled;
  bool cancelled = false;
  std::string error;
};

// Schedules VM relocations and drives the session notifications: announce at
// completion - lead, then at completion swap the VM address, apply path
// changes, and signal completion after notify_lag.
class Orchestrator {
 public:
  explicit Orchestrator(session::SessionLayer& layer);

  MigrationHandle schedule_migration(const VmSpec& vm, const MigrationEvent& ev, session::Session& sess);
  // Drops the migration's future steps; an announcement already made stands.
  void cancel(MigrationHandle h);

  const MigrationRecord& record(MigrationHandle h) const;
  const std::vector<MigrationRecord>& history() const { return records_; }
  // Current address of a VM known to the orchestrator.
  std::optional<Address> vm_address(const std::string& vm_id) const;

 private:
  struct Pending {
    std::vector<EventHandle> events;
    bool done = false;
  };

  session::SessionLayer& layer_;
  std::vector<MigrationRecord> records_;
  std::vector<Pending> pending_;
  std::map<std::string, Address> vm_addr_;
};

struct HookOutcome {
  bool decided = false;
  std::optional<SimTime> measured_rtt;
  accel::Decision decision = accel::Decision::Hold;
  accel::ProxyPair* inserted = nullptr;
};

// Replaces the session's handover strategy. The new connection is opened
// directly; its handshake RTT feeds evaluate_policy and, on Insert, the
// direct attempt is dropped and the session reconnects through `pair` before
// any data moves on the new path.
std::shared_ptr<const HookOutcome> post_migration_hook(session::Session& sess, session::SessionLayer& layer,
                                                       accel::ProxyPair& pair, accel::AcceleratorPolicy policy);
std::shared_ptr<const HookOutcome> post_migration_hook(session::Session& sess, session::SessionLayer& layer,
                                                       accel::ProxyPair& pair);

}  // namespace wansim::migration
