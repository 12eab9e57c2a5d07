#include "wansim/harness/scenario.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>

#include "wansim/migration/orchestrator.hpp"

namespace wansim::harness {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

constexpr NodeId kClient{0}, kNear{1}, kEmulator{2}, kServerA{3}, kFar{4}, kServerB{5};
constexpr Address kClientPre{kClient, 0}, kClientPost{kClient, 1};
constexpr Address kVmOld{kServerA, 0}, kVmNew{kServerB, 0};
// Links whose traffic counts as WAN bytes: emulator to either host side.
constexpr LinkId kOldWan{3}, kNewWan{4};

SimTime one_way_delay(const TopologySection& t, double d_ms) {
  const SimTime d = SimTime::from_seconds(d_ms / 1e3);
  return t.delay_meaning == DelayMeaning::OneWay ? d : d / 2;
}

Topology build_topology(const ScenarioConfig& cfg, double d_ms) {
  const TopologySection& t = cfg.topology;
  // Emulator links absorb whatever the LAN hops leave of the target delays.
  const SimTime old_side = t.baseline_rtt / 2 - t.lan_delay * 2;
  const SimTime new_side = one_way_delay(t, d_ms) - t.lan_delay * 3;
  if (old_side < SimTime{}) {
    throw ConfigError(cfg.name, 0, "topology.baseline_rtt_ms", "shorter than the LAN hops it crosses");
  }
  if (new_side < SimTime{}) throw ConfigError(cfg.name, 0, "topology.delay_ms", "shorter than the LAN hops it crosses");
  const std::vector<LinkSpec> links = {
      {kClientPre, {kNear, 0}, t.lan_delay, t.lan_rate},
      {kClientPost, {kNear, 1}, t.lan_delay, t.lan_rate},
      {{kNear, 2}, {kEmulator, 0}, t.lan_delay, t.lan_rate},
      {{kEmulator, 1}, kVmOld, old_side, t.emulator_rate},
      {{kEmulator, 2}, {kFar, 0}, new_side, t.emulator_rate},
      {{kFar, 1}, kVmNew, t.lan_delay, t.lan_rate},
  };
  std::map<NodeId, std::string> names;
  for (std::uint32_t i = 0; i < std::size(kTestbedNodes); ++i) names[NodeId{i}] = std::string(kTestbedNodes[i]);
  return Topology::build(links, std::move(names));
}

session::SessionConfig session_config(const ScenarioConfig& cfg) {
  session::SessionConfig sc;
  sc.transport.mss = cfg.transport.mss;
  sc.transport.header_bytes = cfg.transport.header_bytes;
  sc.transport.rwnd_cap_bytes = cfg.transport.rwnd_bytes;
  sc.transport.initial_cwnd_segments = cfg.transport.initial_cwnd_segments;
  sc.sndbuf_bytes = cfg.session.sndbuf_bytes;
  sc.sndbuf_windows = cfg.session.sndbuf_windows;
  sc.record_payload = cfg.session.record_payload;
  return sc;
}

accel::ProxyPairSpec pair_spec(const ScenarioConfig& cfg) {
  accel::ProxyPairSpec p;
  p.near_at = {kNear, 2};
  p.far_at = {kFar, 0};
  p.mode = accel::ProxyMode::Optimizing;
  p.policy = cfg.accelerator.policy;
  p.descriptor = accel::ContentDescriptor{cfg.workload.bytes, cfg.accelerator.redundancy,
                                          cfg.accelerator.compressibility, cfg.seed};
  p.store_capacity_bytes = cfg.accelerator.store_capacity_bytes;
  p.lan_window_bytes = cfg.accelerator.lan_window_bytes;
  return p;
}

double rate_bps(const session::DeliveryLedger& ledger, SimTime from, SimTime to) {
  if (to <= from) return kNaN;
  return static_cast<double>(ledger.bytes_between(from, to)) * 8.0 / (to - from).sec();
}

struct Testbed {
  Engine engine;
  Network net;
  transport::TransportLayer tl;
  session::SessionLayer sl;
  migration::Orchestrator orch;
  std::unique_ptr<accel::ProxyPair> pair;

  Testbed(Topology topo, const session::SessionConfig& sc) : net(engine, std::move(topo)), tl(net), sl(tl, sc), orch(sl) {}
};

}  // namespace

std::optional<SimTime> RunOutcome::completion_time() const {
  if (!first_send || !completed) return std::nullopt;
  return *completed - *first_send;
}

RunOutcome simulate(const ScenarioConfig& cfg, double d_ms) {
  auto bed = std::make_unique<Testbed>(build_topology(cfg, d_ms), session_config(cfg));
  Engine& engine = bed->engine;
  const bool migrate = cfg.migration.enabled;
  if (cfg.accelerator.enabled) bed->pair = std::make_unique<accel::ProxyPair>(bed->tl, pair_spec(cfg));

  RunOutcome out;
  session::Session* sess = nullptr;
  bool written = false;
  std::shared_ptr<const migration::HookOutcome> hook;

  session::WriteOptions opts;
  opts.app_rate_bps = cfg.workload.app_rate;
  auto start_workload = [&] {
    if (written) return;
    written = true;
    sess->write(cfg.workload.bytes, opts);
  };

  auto attach = [&](session::Session& s) {
    sess = &s;
    if (migrate) {
      const migration::VmSpec vm{"vm", kVmOld, kVmNew, kServerA};
      migration::MigrationEvent ev;
      ev.vm_id = vm.vm_id;
      ev.start_at = cfg.migration.start_at;
      ev.duration = cfg.migration.duration;
      ev.destination = kServerB;
      ev.announce_lead = cfg.migration.announce_lead;
      ev.notify_lag = cfg.migration.notify_lag;
      ev.downtime = cfg.migration.downtime;
      bed->orch.schedule_migration(vm, ev, s);
      if (bed->pair) hook = migration::post_migration_hook(s, bed->sl, *bed->pair, cfg.accelerator.policy);
    }
    if (migrate && cfg.workload.start == WorkloadStart::AfterHandover) {
      auto prev = s.on_handover;
      s.on_handover = [prev, &start_workload](const session::HandoverReport& rep) {
        if (prev) prev(rep);
        if (!rep.rebind) start_workload();
      };
    } else {
      s.on_ready = [&start_workload] { start_workload(); };
    }
    s.on_complete = [&engine, stop = cfg.measure.stop_at](SimTime) {
      if (stop == SimTime{}) engine.stop();
    };
  };

  if (cfg.session.path == StartPath::Pre) {
    bed->sl.serve(kVmOld);
    attach(bed->sl.open_session(std::vector<Address>{kClientPre, kClientPost}, kVmOld));
  } else {
    bed->sl.serve(kVmNew);
    if (bed->pair) {
      // Measure the path first, as the post-migration hook would.
      bed->tl.probe_rtt(kClientPost, kVmNew, [&](std::optional<SimTime> rtt) {
        const bool insert = rtt && accel::evaluate_policy(cfg.accelerator.policy, *rtt, false) == accel::Decision::Insert;
        out.accelerator_inserted = insert;
        attach(insert ? bed->sl.open_session(kClientPost, kVmNew, bed->pair->connector())
                      : bed->sl.open_session(kClientPost, kVmNew));
      });
    } else {
      attach(bed->sl.open_session(kClientPost, kVmNew));
    }
  }

  const SimTime limit = cfg.measure.stop_at > SimTime{} ? cfg.measure.stop_at : cfg.measure.horizon;
  out.events = engine.run_until(limit).processed;
  out.ended = engine.now();
  if (sess == nullptr) return out;

  const session::DeliveryLedger& ledger = sess->deliver_stream();
  out.first_send = sess->first_send();
  out.completed = sess->completed_at();
  for (const session::HandoverReport& rep : sess->handovers()) {
    if (rep.rebind) continue;
    out.handover_started = rep.started;
    out.handover_switched = rep.switched;
    break;
  }
  if (hook && hook->inserted) out.accelerator_inserted = true;

  const SimTime end = out.completed.value_or(out.ended);
  out.throughput_pre_bps = kNaN;
  out.throughput_post_bps = kNaN;
  if (out.first_send) {
    if (migrate && *out.first_send < cfg.migration.start_at) {
      out.throughput_pre_bps = rate_bps(ledger, *out.first_send + cfg.measure.pre_settle, cfg.migration.start_at);
    }
    SimTime from = *out.first_send;
    if (out.handover_switched) from = std::max(from, *out.handover_switched);
    out.throughput_post_bps = rate_bps(ledger, from + cfg.measure.post_settle, end);
  }

  for (LinkId l : {kOldWan, kNewWan}) {
    out.wan_bytes += bed->net.link_bytes(l, Direction::Forward) + bed->net.link_bytes(l, Direction::Reverse);
  }

  const Topology& topo = bed->net.topology();
  for (const auto& [device, profile] : cfg.power.devices) {
    const auto node = topo.node_by_name(device);
    if (!node) throw ConfigError(cfg.name, 0, "power.devices." + device, "not a testbed node");
    power::DeviceActivity act;
    act.device = device;
    act.profile = profile;
    act.busy = bed->net.node_busy(*node);
    for (LinkId l : topo.links_of(*node)) act.nic_rate = std::max(act.nic_rate, topo.link(l).rate_bps);
    out.activity.push_back(std::move(act));
  }
  return out;
}

double fleet_energy_j(const ScenarioConfig& cfg, const RunOutcome& run, SimTime length) {
  if (run.activity.empty() || !run.first_send || length <= SimTime{}) return 0.0;
  const Interval window{*run.first_send, *run.first_send + length};
  return power::energy_for_scenario(run.activity, cfg.power.profiles, window).total_j();
}

std::optional<ScenarioConfig> baseline_config(const ScenarioConfig& cfg) {
  ScenarioConfig b = cfg;
  switch (cfg.normalize) {
    case Normalize::None: return std::nullopt;
    case Normalize::AcceleratorOff:
      b.accelerator.enabled = false;
      break;
    case Normalize::NoMigration:
      b.accelerator.enabled = false;
      b.migration.enabled = false;
      b.session.path = StartPath::Pre;
      b.workload.start = WorkloadStart::AtOpen;
      break;
  }
  b.normalize = Normalize::None;
  return b;
}

std::string scenario_id(const ScenarioConfig& cfg, double d_ms) { return cfg.name + "-d" + format_double(d_ms); }

PointResult run_point(const ScenarioConfig& cfg, double d_ms) {
  PointResult res;
  res.run = simulate(cfg, d_ms);
  const auto bcfg = baseline_config(cfg);
  if (bcfg) res.baseline = simulate(*bcfg, d_ms);

  const auto own = res.run.completion_time();
  const auto base = res.baseline ? res.baseline->completion_time() : std::nullopt;

  MetricsRow& row = res.row;
  row.scenario_id = scenario_id(cfg, d_ms);
  row.d_ms = d_ms;
  row.completion_time_s = own ? own->sec() : kNaN;
  if (!bcfg) {
    row.normalized_T = own ? 1.0 : kNaN;
  } else {
    row.normalized_T = own && base && *base > SimTime{} ? own->sec() / base->sec() : kNaN;
  }
  row.throughput_pre_bps = res.run.throughput_pre_bps;
  row.throughput_post_bps = res.run.throughput_post_bps;
  row.handover_duration_s = res.run.handover_started && res.run.handover_switched
                                ? (*res.run.handover_switched - *res.run.handover_started).sec()
                                : 0.0;
  row.wan_bytes = res.run.wan_bytes;
  row.accelerator_inserted = res.run.accelerator_inserted;

  SimTime window;
  if (own) {
    window = *own;
  } else if (res.run.first_send) {
    window = res.run.ended - *res.run.first_send;
  }
  if (base) window = std::max(window, *base);
  row.energy_j = fleet_energy_j(cfg, res.run, window);
  if (res.baseline) res.baseline_energy_j = fleet_energy_j(*bcfg, *res.baseline, window);
  return res;
}

std::vector<double> sweep_points(const ScenarioConfig& cfg) {
  if (cfg.sweep.present) return cfg.sweep.delays_ms;
  return {cfg.topology.delay_ms};
}

std::vector<MetricsRow> run(const ScenarioConfig& cfg) {
  std::vector<MetricsRow> rows;
  for (double d : sweep_points(cfg)) rows.push_back(run_point(cfg, d).row);
  return rows;
}

}  // namespace wansim::harness
