#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "wansim/harness/config.hpp"
#include "wansim/harness/metrics.hpp"

namespace wansim::harness {

enum class Figure { Table1, Fig5, Fig6, Slowdown };

std::optional<Figure> parse_figure(std::string_view name);
std::string_view to_string(Figure f);

struct Verdict {
  std::string check;
  bool pass = false;
  std::string detail;
};

struct ReproReport {
  std::string figure;
  std::string table;  // measured against reference values, for people
  std::vector<Verdict> verdicts;
  std::string csv;    // for machines; byte-identical for equal inputs
  std::vector<MetricsRow> rows;

  bool passed() const;
};

// Loads the figure's preset from `presets` and runs it. `seed` overrides the
// preset's seed.
ReproReport reproduce(Figure f, std::optional<std::uint64_t> seed = std::nullopt,
                      const std::filesystem::path& presets = preset_dir());

// Reference values the presets are calibrated against.
struct Table1Point {
  double d_ms;
  double normalized_T;
};
inline constexpr Table1Point kTable1Reference[] = {{250, 0.25}, {500, 0.10}, {750, 0.08}, {1000, 0.07}};
inline constexpr double kTable1Tolerance = 0.05;
inline constexpr double kTable1Ceiling = 0.3;
inline constexpr double kFig5Target = 0.10;
inline constexpr double kFig5Tolerance = 0.03;
inline constexpr double kFig6Low = 0.08;
inline constexpr double kFig6High = 0.12;
// Post-migration throughput over pre-migration throughput.
inline constexpr double kSlowdownTarget = 0.2;
inline constexpr double kSlowdownRelTolerance = 0.2;
inline constexpr double kAcceleratedRelTolerance = 0.1;

}  // namespace wansim::harness
