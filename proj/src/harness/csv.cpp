#include <array>
#include <charconv>
#include <cmath>
#include <fstream>
#include <ostream>
#include <sstream>

#include "wansim/harness/metrics.hpp"

namespace wansim::harness {

namespace {

bool same(double a, double b) { return (std::isnan(a) && std::isnan(b)) || a == b; }

double parse_double(const std::string& s, int line) {
  double v = 0;
  const auto [end, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || end != s.data() + s.size()) {
    throw CsvError("line " + std::to_string(line) + ": not a number: '" + s + "'");
  }
  return v;
}

std::uint64_t parse_u64(const std::string& s, int line) {
  std::uint64_t v = 0;
  const auto [end, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || end != s.data() + s.size()) {
    throw CsvError("line " + std::to_string(line) + ": not an integer: '" + s + "'");
  }
  return v;
}

}  // namespace

bool MetricsRow::operator==(const MetricsRow& o) const {
  return scenario_id == o.scenario_id && same(d_ms, o.d_ms) && same(completion_time_s, o.completion_time_s) &&
         same(normalized_T, o.normalized_T) && same(throughput_pre_bps, o.throughput_pre_bps) &&
         same(throughput_post_bps, o.throughput_post_bps) && same(handover_duration_s, o.handover_duration_s) &&
         wan_bytes == o.wan_bytes && same(energy_j, o.energy_j) && accelerator_inserted == o.accelerator_inserted;
}

const std::vector<std::string>& csv_columns() {
  static const std::vector<std::string> cols = {
      "scenario_id",         "d_ms",      "completion_time_s", "normalized_T",
      "throughput_pre_bps",  "throughput_post_bps", "handover_duration_s", "wan_bytes",
      "energy_j",            "accelerator_inserted"};
  return cols;
}

std::string format_double(double v) {
  if (std::isnan(v)) return "nan";
  std::array<char, 64> buf{};
  const auto [end, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), v);
  (void)ec;
  return std::string(buf.data(), end);
}

std::string format_csv(const std::vector<MetricsRow>& rows) {
  std::string out;
  for (std::size_t i = 0; i < csv_columns().size(); ++i) out += (i ? "," : "") + csv_columns()[i];
  out += '\n';
  for (const MetricsRow& r : rows) {
    if (r.scenario_id.find_first_of(",\n\"") != std::string::npos) {
      throw CsvError("scenario id must not contain commas, quotes or newlines: " + r.scenario_id);
    }
    out += r.scenario_id;
    for (double v : {r.d_ms, r.completion_time_s, r.normalized_T, r.throughput_pre_bps, r.throughput_post_bps,
                     r.handover_duration_s}) {
      out += ',' + format_double(v);
    }
    out += ',' + std::to_string(r.wan_bytes);
    out += ',' + format_double(r.energy_j);
    out += r.accelerator_inserted ? ",1\n" : ",0\n";
  }
  return out;
}

void emit_csv(const std::vector<MetricsRow>& rows, std::ostream& out) { out << format_csv(rows); }

void emit_csv(const std::vector<MetricsRow>& rows, const std::filesystem::path& file) {
  const std::string text = format_csv(rows);
  std::ofstream out(file, std::ios::binary | std::ios::trunc);
  if (!out) throw CsvError("cannot write " + file.string());
  out << text;
  out.flush();
  if (!out) throw CsvError("write failed: " + file.string());
}

std::vector<MetricsRow> parse_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  std::vector<MetricsRow> rows;
  while (std::getline(in, line)) {
    ++lineno;
    std::vector<std::string> cells;
    std::string cell;
    std::istringstream ls(line);
    while (std::getline(ls, cell, ',')) cells.push_back(cell);
    if (!line.empty() && line.back() == ',') cells.emplace_back();
    if (lineno == 1) {
      if (cells != csv_columns()) throw CsvError("line 1: unexpected header");
      continue;
    }
    if (cells.size() != csv_columns().size()) {
      throw CsvError("line " + std::to_string(lineno) + ": expected " + std::to_string(csv_columns().size()) +
                     " fields, got " + std::to_string(cells.size()));
    }
    MetricsRow r;
    r.scenario_id = cells[0];
    r.d_ms = parse_double(cells[1], lineno);
    r.completion_time_s = parse_double(cells[2], lineno);
    r.normalized_T = parse_double(cells[3], lineno);
    r.throughput_pre_bps = parse_double(cells[4], lineno);
    r.throughput_post_bps = parse_double(cells[5], lineno);
    r.handover_duration_s = parse_double(cells[6], lineno);
    r.wan_bytes = parse_u64(cells[7], lineno);
    r.energy_j = parse_double(cells[8], lineno);
    if (cells[9] != "0" && cells[9] != "1") throw CsvError("line " + std::to_string(lineno) + ": flag must be 0 or 1");
    r.accelerator_inserted = cells[9] == "1";
    rows.push_back(std::move(r));
  }
  if (lineno == 0) throw CsvError("empty input");
  return rows;
}

}  // namespace wansim::harness
