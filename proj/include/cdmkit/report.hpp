#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "cdmkit/matrix.hpp"

namespace cdm {

struct HeatmapGrid {
  std::vector<std::string> rows;  // model ids
  std::vector<std::string> cols;  // concept ids
  Matrix values;                  // in [lo, hi]
  double lo = 0.0;
  double hi = 1.0;

  void validate() const;
};

/// "#rrggbb" on a linear white-to-navy ramp; values outside [lo, hi] are
/// clamped to the ends.
std::string heatmap_color(double value, double lo, double hi);

/// Models as rows, concepts as columns. Every cell rect carries
/// data-model, data-concept and data-value attributes.
std::string render_heatmap_svg(const HeatmapGrid& grid);

std::string sha256_hex(std::string_view bytes);
std::string sha256_file(const std::filesystem::path& path);

/// Provenance record written as manifest.json into an output directory.
struct RunManifest {
  std::string command;
  std::vector<std::pair<std::string, std::string>> config;  // effective settings
  std::vector<std::filesystem::path> inputs;
  std::uint64_t seed = 0;
  bool has_seed = false;
  std::string started_at;  // ISO-8601 UTC

  void write(const std::filesystem::path& dir) const;
};

std::string utc_timestamp();
const char* tool_version();

}  // namespace cdm
