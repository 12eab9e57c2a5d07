#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "wansim/simcore/time.hpp"

namespace wansim::harness {

// One sweep point. Quantities that a run could not produce (an unfinished
// transfer, a throughput window that never opened) are NaN.
struct MetricsRow {
  std::string scenario_id;
  double d_ms = 0;
  double completion_time_s = 0;
  double normalized_T = 0;
  double throughput_pre_bps = 0;
  double throughput_post_bps = 0;
  double handover_duration_s = 0;
  std::uint64_t wan_bytes = 0;
  double energy_j = 0;
  bool accelerator_inserted = false;

  // NaN compares equal to NaN here, so parsed rows match emitted ones.
  bool operator==(const MetricsRow& o) const;
};

class CsvError : public SimError {
 public:
  using SimError::SimError;
};

const std::vector<std::string>& csv_columns();

// Header plus one line per row, fixed column order, shortest round-trip
// decimal form, '\n' line ends.
std::string format_csv(const std::vector<MetricsRow>& rows);
void emit_csv(const std::vector<MetricsRow>& rows, std::ostream& out);
// Throws CsvError when the destination cannot be written.
void emit_csv(const std::vector<MetricsRow>& rows, const std::filesystem::path& file);
std::vector<MetricsRow> parse_csv(const std::string& text);

// Shortest decimal string that parses back to exactly `v`.
std::string format_double(double v);

}  // namespace wansim::harness
