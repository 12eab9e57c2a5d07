#include "wansim/harness/config.hpp"

#include <yaml-cpp/yaml.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

namespace wansim::harness {

ConfigError::ConfigError(const std::string& source, int line, const std::string& field, const std::string& why)
    : SimError(source + ":" + std::to_string(line) + ": " + field + ": " + why), field_(field), line_(line) {}

std::string_view to_string(Normalize n) {
  switch (n) {
    case Normalize::AcceleratorOff: return "accelerator_off";
    case Normalize::NoMigration: return "no_migration";
    case Normalize::None: return "none";
  }
  return "?";
}

std::filesystem::path preset_dir() {
#ifdef WANSIM_PRESET_DIR
  return WANSIM_PRESET_DIR;
#else
  return "presets";
#endif
}

namespace {

int line_of(const YAML::Node& n) { return n.Mark().line + 1; }

// A mapping node whose keys are checked against the ones actually read.
class Section {
 public:
  Section(const YAML::Node& node, std::string path, const std::string& source)
      : node_(node), path_(std::move(path)), source_(source) {
    if (node_ && !node_.IsMap()) fail_at(node_, path_, "expected a mapping");
  }

  ~Section() noexcept(false) {
    if (std::uncaught_exceptions() > 0 || !node_) return;
    for (const auto& kv : node_) {
      const auto key = kv.first.as<std::string>();
      if (!used_.contains(key)) fail_at(kv.first, field(key), "unknown key");
    }
  }

  explicit operator bool() const { return static_cast<bool>(node_); }

  YAML::Node raw(const std::string& key) {
    used_.insert(key);
    return node_ ? node_[key] : YAML::Node();
  }

  Section sub(const std::string& key) { return Section(raw(key), field(key), source_); }

  std::optional<double> number(const std::string& key, double lo, double hi, bool lo_open = false) {
    const YAML::Node n = raw(key);
    if (!n) return std::nullopt;
    double v = 0;
    try {
      v = n.as<double>();
    } catch (const YAML::Exception&) {
      fail_at(n, field(key), "expected a number");
    }
    std::ostringstream range;
    range << (lo_open ? "(" : "[") << lo << ", " << hi << "]";
    if (!std::isfinite(v) || v < lo || v > hi || (lo_open && v == lo)) {
      fail_at(n, field(key), "must lie in " + range.str());
    }
    return v;
  }

  std::optional<std::uint64_t> integer(const std::string& key, std::uint64_t lo, std::uint64_t hi) {
    const YAML::Node n = raw(key);
    if (!n) return std::nullopt;
    std::uint64_t v = 0;
    try {
      v = n.as<std::uint64_t>();
    } catch (const YAML::Exception&) {
      fail_at(n, field(key), "expected a non-negative integer");
    }
    if (v < lo || v > hi) {
      fail_at(n, field(key), "must lie in [" + std::to_string(lo) + ", " + std::to_string(hi) + "]");
    }
    return v;
  }

  std::optional<bool> boolean(const std::string& key) {
    const YAML::Node n = raw(key);
    if (!n) return std::nullopt;
    try {
      return n.as<bool>();
    } catch (const YAML::Exception&) {
      fail_at(n, field(key), "expected true or false");
    }
  }

  std::optional<std::string> text(const std::string& key) {
    const YAML::Node n = raw(key);
    if (!n) return std::nullopt;
    if (!n.IsScalar()) fail_at(n, field(key), "expected a string");
    return n.as<std::string>();
  }

  template <typename E>
  std::optional<E> choice(const std::string& key, const std::vector<std::pair<std::string, E>>& options) {
    const YAML::Node n = raw(key);
    auto s = text(key);
    if (!s) return std::nullopt;
    std::string names;
    for (const auto& [name, value] : options) {
      if (name == *s) return value;
      names += (names.empty() ? "" : ", ") + name;
    }
    fail_at(n, field(key), "expected one of " + names);
  }

  [[noreturn]] void fail(const std::string& key, const std::string& why) {
    const YAML::Node n = node_ ? node_[key] : YAML::Node();
    if (n) fail_at(n, field(key), why);
    throw ConfigError(source_, node_ ? line_of(node_) : 0, field(key), why);
  }

  [[noreturn]] void fail_at(const YAML::Node& n, const std::string& f, const std::string& why) const {
    throw ConfigError(source_, line_of(n), f, why);
  }

  std::string field(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }
  const std::string& source() const { return source_; }
  const std::string& path() const { return path_; }
  const YAML::Node& node() const { return node_; }

 private:
  YAML::Node node_;
  std::string path_;
  const std::string& source_;
  std::set<std::string> used_;
};

constexpr double kMaxSeconds = 36'000;
constexpr double kMaxMbps = 100'000;

BitRate mbps(double v) { return static_cast<BitRate>(std::llround(v * 1e6)); }
SimTime ms(double v) { return SimTime::from_seconds(v / 1e3); }
SimTime secs(double v) { return SimTime::from_seconds(v); }

void read_topology(Section& s, TopologySection& t) {
  if (auto v = s.number("lan_rate_mbps", 0, kMaxMbps, true)) t.lan_rate = mbps(*v);
  if (auto v = s.number("lan_delay_us", 0, 1e6)) t.lan_delay = SimTime::micros(std::llround(*v));
  if (auto v = s.number("emulator_rate_mbps", 0, kMaxMbps, true)) t.emulator_rate = mbps(*v);
  if (auto v = s.number("baseline_rtt_ms", 0, 1e5, true)) t.baseline_rtt = ms(*v);
  if (auto v = s.number("delay_ms", 0, 1e5, true)) t.delay_ms = *v;
  if (auto v = s.choice<DelayMeaning>("delay_meaning",
                                      {{"one_way", DelayMeaning::OneWay}, {"round_trip", DelayMeaning::RoundTrip}})) {
    t.delay_meaning = *v;
  }
  if (t.lan_rate == 0 || t.emulator_rate == 0) s.fail("lan_rate_mbps", "rates must be at least 1 bit/s");
}

void read_transport(Section& s, TransportSection& t) {
  if (auto v = s.integer("mss", 64, 65'535)) t.mss = static_cast<std::uint32_t>(*v);
  if (auto v = s.integer("header_bytes", 0, 1'024)) t.header_bytes = static_cast<std::uint32_t>(*v);
  if (auto v = s.integer("rwnd_bytes", 1, 1ULL << 32)) t.rwnd_bytes = *v;
  if (auto v = s.integer("initial_cwnd_segments", 1, 1'000)) t.initial_cwnd_segments = static_cast<std::uint32_t>(*v);
  if (t.rwnd_bytes < t.mss) s.fail("rwnd_bytes", "must hold at least one MSS");
}

void read_session(Section& s, SessionSection& t) {
  if (auto v = s.choice<StartPath>("path", {{"pre", StartPath::Pre}, {"post", StartPath::Post}})) t.path = *v;
  if (auto v = s.integer("record_payload", 1, 1ULL << 24)) t.record_payload = static_cast<std::uint32_t>(*v);
  if (auto v = s.integer("sndbuf_bytes", 1, 1ULL << 34)) t.sndbuf_bytes = *v;
  if (auto v = s.integer("sndbuf_windows", 1, 1'000)) t.sndbuf_windows = static_cast<std::uint32_t>(*v);
}

void read_workload(Section& s, WorkloadSection& t) {
  if (auto v = s.integer("bytes", 1, 1ULL << 40)) t.bytes = *v;
  if (auto v = s.number("app_rate_mbps", 0, kMaxMbps, true)) t.app_rate = mbps(*v);
  if (auto v = s.choice<WorkloadStart>(
          "start", {{"at_open", WorkloadStart::AtOpen}, {"after_handover", WorkloadStart::AfterHandover}})) {
    t.start = *v;
  }
}

void read_migration(Section& s, MigrationSection& t) {
  if (auto v = s.boolean("enabled")) t.enabled = *v;
  if (auto v = s.number("start_s", 0, kMaxSeconds)) t.start_at = secs(*v);
  if (auto v = s.number("duration_s", 0, kMaxSeconds)) t.duration = secs(*v);
  if (auto v = s.number("announce_lead_s", 0, kMaxSeconds)) t.announce_lead = secs(*v);
  if (auto v = s.number("notify_lag_ms", 0, kMaxSeconds * 1e3)) t.notify_lag = ms(*v);
  if (auto v = s.number("downtime_ms", 0, kMaxSeconds * 1e3)) t.downtime = ms(*v);
  if (t.announce_lead && *t.announce_lead > t.start_at + t.duration) {
    s.fail("announce_lead_s", "announcement would precede time zero");
  }
  if (t.downtime > t.duration) s.fail("downtime_ms", "must not exceed the migration duration");
}

void read_accelerator(Section& s, AcceleratorSection& t) {
  if (auto v = s.boolean("enabled")) t.enabled = *v;
  if (auto v = s.number("rtt_threshold_ms", 0, 1e6)) t.policy.rtt_threshold = ms(*v);
  if (auto v = s.number("hysteresis_ms", 0, 1e6)) t.policy.hysteresis = ms(*v);
  if (auto v = s.integer("wan_window_bytes", 1, 1ULL << 34)) t.policy.wan_window_bytes = *v;
  if (auto v = s.number("wan_rate_cap_mbps", 0, kMaxMbps, true)) t.policy.wan_rate_cap = mbps(*v);
  if (auto v = s.integer("lan_window_bytes", 1, 1ULL << 34)) t.lan_window_bytes = *v;
  if (auto v = s.integer("store_capacity_bytes", 8192, 1ULL << 44)) t.store_capacity_bytes = *v;
  if (auto v = s.number("redundancy", 0, 1)) t.redundancy = *v;
  if (auto v = s.number("compressibility", 0, 1, true)) t.compressibility = *v;
  if (t.policy.hysteresis > t.policy.rtt_threshold) s.fail("hysteresis_ms", "must not exceed rtt_threshold_ms");
}

power::PowerProfile read_profile(Section& s, const std::string& name, const std::filesystem::path& base_dir) {
  power::PowerProfile p;
  if (auto file = s.text("file")) {
    const std::filesystem::path path = base_dir / *file;
    std::ifstream in(path);
    if (!in) s.fail("file", "cannot read " + path.string());
    std::stringstream buf;
    buf << in.rdbuf();
    try {
      p = power::parse_profile(buf.str());
    } catch (const power::PowerError& e) {
      s.fail("file", e.what());
    }
    if (p.name.empty()) p.name = name;
    return p;
  }
  p.name = name;
  p.observation_window = SimTime::seconds(1);
  auto watts = [&](double w) { return power::watts_to_mw(w); };
  if (auto v = s.number("p_fixed_w", 0, 1e6)) p.p_fixed_mw = watts(*v);
  if (auto v = s.number("p_sleep_w", 0, 1e6)) p.p_sleep_mw = watts(*v);
  if (auto v = s.number("window_s", 0, kMaxSeconds, true)) p.observation_window = secs(*v);
  if (auto v = s.number("sleep_entry_gap_s", 0, kMaxSeconds)) p.sleep_entry_gap = secs(*v);
  const YAML::Node nic = s.raw("nic");
  if (nic) {
    if (!nic.IsSequence()) s.fail_at(nic, s.field("nic"), "expected a list of {rate_mbps, w}");
    for (std::size_t i = 0; i < nic.size(); ++i) {
      Section step(nic[i], s.field("nic[" + std::to_string(i) + "]"), s.source());
      const auto rate = step.number("rate_mbps", 0, kMaxMbps, true);
      const auto w = step.number("w", 0, 1e6);
      if (!rate || !w) step.fail_at(nic[i], s.field("nic[" + std::to_string(i) + "]"), "needs rate_mbps and w");
      p.nic.push_back({mbps(*rate), watts(*w)});
    }
  }
  try {
    p.validate();
  } catch (const power::PowerError& e) {
    s.fail_at(s.node(), s.path(), e.what());
  }
  return p;
}

void read_power(Section& s, PowerSection& t, const std::filesystem::path& base_dir) {
  Section profiles = s.sub("profiles");
  if (profiles) {
    for (const auto& kv : profiles.node()) {
      const auto name = kv.first.as<std::string>();
      Section one = profiles.sub(name);
      t.profiles[name] = read_profile(one, name, base_dir);
    }
  }
  Section devices = s.sub("devices");
  if (devices) {
    for (const auto& kv : devices.node()) {
      const auto dev = kv.first.as<std::string>();
      const auto prof = devices.text(dev);
      if (std::find(std::begin(kTestbedNodes), std::end(kTestbedNodes), dev) == std::end(kTestbedNodes)) {
        devices.fail(dev, "no testbed node named '" + dev + "'");
      }
      if (!t.profiles.contains(*prof)) devices.fail(dev, "no profile named '" + *prof + "'");
      t.devices[dev] = *prof;
    }
  }
}

void read_measure(Section& s, MeasureSection& t) {
  if (auto v = s.number("stop_s", 0, kMaxSeconds)) t.stop_at = secs(*v);
  if (auto v = s.number("horizon_s", 0, kMaxSeconds * 10, true)) t.horizon = secs(*v);
  if (auto v = s.number("pre_settle_s", 0, kMaxSeconds)) t.pre_settle = secs(*v);
  if (auto v = s.number("post_settle_s", 0, kMaxSeconds)) t.post_settle = secs(*v);
}

void read_sweep(Section& s, SweepSection& t) {
  t.present = true;
  if (auto axis = s.text("axis"); axis && *axis != "delay") s.fail("axis", "only the delay axis is supported");
  const YAML::Node values = s.raw("values_ms");
  if (!values) s.fail_at(s.node(), s.field("values_ms"), "required");
  if (!values.IsSequence()) s.fail_at(values, s.field("values_ms"), "expected a list of delays");
  for (std::size_t i = 0; i < values.size(); ++i) {
    double v = 0;
    try {
      v = values[i].as<double>();
    } catch (const YAML::Exception&) {
      s.fail_at(values[i], s.field("values_ms"), "expected a number");
    }
    if (!std::isfinite(v) || v <= 0 || v > 1e5) s.fail_at(values[i], s.field("values_ms"), "must lie in (0, 100000]");
    t.delays_ms.push_back(v);
  }
}

void read_compare(Section& s, CompareSection& t) {
  t.present = true;
  auto bytes = s.integer("bytes", 1, 1ULL << 50);
  auto low = s.number("rate_low_mbps", 0, kMaxMbps, true);
  auto high = s.number("rate_high_mbps", 0, kMaxMbps, true);
  auto prof = s.text("profile");
  if (!bytes) s.fail_at(s.node(), s.field("bytes"), "required");
  if (!low) s.fail_at(s.node(), s.field("rate_low_mbps"), "required");
  if (!high) s.fail_at(s.node(), s.field("rate_high_mbps"), "required");
  if (!prof) s.fail_at(s.node(), s.field("profile"), "required");
  if (*high <= *low) s.fail("rate_high_mbps", "must exceed rate_low_mbps");
  t.bytes = *bytes;
  t.rate_low = mbps(*low);
  t.rate_high = mbps(*high);
  t.profile = *prof;
}

}  // namespace

void ScenarioConfig::validate(const std::string& source) const {
  auto fail = [&](const std::string& f, const std::string& why) { throw ConfigError(source, 0, f, why); };
  if (session.record_payload + 16 > transport.mss * 64ULL) fail("session.record_payload", "record too large");
  if (migration.enabled && session.path == StartPath::Post) {
    fail("migration.enabled", "a session that starts on the new host cannot migrate");
  }
  if (compare.present && !power.profiles.contains(compare.profile)) {
    fail("compare.profile", "no profile named '" + compare.profile + "'");
  }
  if (measure.stop_at > measure.horizon) fail("measure.stop_s", "must not exceed horizon_s");
}

ScenarioConfig parse_config(const std::string& text, const std::string& source,
                            const std::filesystem::path& base_dir) {
  YAML::Node root;
  try {
    root = YAML::Load(text);
  } catch (const YAML::ParserException& e) {
    throw ConfigError(source, e.mark.line + 1, "<syntax>", e.msg);
  }
  ScenarioConfig cfg;
  if (!root || root.IsNull()) throw ConfigError(source, 1, "<root>", "empty configuration");
  {
    Section top(root, "", source);
    if (auto v = top.text("name")) cfg.name = *v;
    if (auto v = top.integer("seed", 0, UINT64_MAX)) cfg.seed = *v;
    if (Section s = top.sub("topology")) read_topology(s, cfg.topology);
    if (Section s = top.sub("transport")) read_transport(s, cfg.transport);
    if (Section s = top.sub("session")) read_session(s, cfg.session);
    if (Section s = top.sub("workload")) read_workload(s, cfg.workload);
    if (Section s = top.sub("migration")) read_migration(s, cfg.migration);
    if (Section s = top.sub("accelerator")) read_accelerator(s, cfg.accelerator);
    if (Section s = top.sub("power")) read_power(s, cfg.power, base_dir);
    if (auto v = top.choice<Normalize>("normalize", {{"accelerator_off", Normalize::AcceleratorOff},
                                                     {"no_migration", Normalize::NoMigration},
                                                     {"none", Normalize::None}})) {
      cfg.normalize = *v;
    }
    if (Section s = top.sub("measure")) read_measure(s, cfg.measure);
    if (Section s = top.sub("sweep")) read_sweep(s, cfg.sweep);
    if (Section s = top.sub("compare")) read_compare(s, cfg.compare);
  }
  cfg.validate(source);
  return cfg;
}

ScenarioConfig load_config(const std::filesystem::path& file) {
  std::ifstream in(file);
  if (!in) throw ConfigError(file.string(), 0, "<file>", "cannot open");
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_config(buf.str(), file.string(), file.parent_path());
}

}  // namespace wansim::harness
