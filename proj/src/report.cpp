#include "cdmkit/report.hpp"

#include <openssl/evp.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <ctime>
#include <iomanip>
#include <sstream>

#include <json.hpp>

#include "cdmkit/error.hpp"

namespace cdm {

namespace {

constexpr int kCell = 14;
constexpr int kLeftMargin = 160;
constexpr int kTopMargin = 90;

std::string xml_escape(std::string_view s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out.push_back(c);
    }
  }
  return out;
}

}  // namespace

void HeatmapGrid::validate() const {
  if (values.rows() != static_cast<Eigen::Index>(rows.size()) || values.cols() != static_cast<Eigen::Index>(cols.size()))
    fail(ErrorKind::dimension, "heatmap: values do not match row/column ids");
  if (!(hi > lo)) fail(ErrorKind::invalid_argument, "heatmap: color scale needs hi > lo");
  if (!((values.array() >= lo) && (values.array() <= hi)).all())
    fail(ErrorKind::validation, "heatmap: values outside the color scale bounds");
}

std::string heatmap_color(double value, double lo, double hi) {
  double t = (value - lo) / (hi - lo);
  t = std::clamp(std::isfinite(t) ? t : 0.0, 0.0, 1.0);
  // #ffffff -> #08306b
  auto channel = [t](int from, int to) { return static_cast<int>(std::lround(from + (to - from) * t)); };
  std::ostringstream os;
  os << '#' << std::hex << std::setfill('0') << std::setw(2) << channel(255, 8) << std::setw(2) << channel(255, 48)
     << std::setw(2) << channel(255, 107);
  return os.str();
}

std::string render_heatmap_svg(const HeatmapGrid& g) {
  g.validate();
  const int width = kLeftMargin + kCell * static_cast<int>(g.cols.size()) + 20;
  const int height = kTopMargin + kCell * static_cast<int>(g.rows.size()) + 40;
  std::ostringstream os;
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\"" << height
     << "\" data-scale-min=\"" << format_double(g.lo) << "\" data-scale-max=\"" << format_double(g.hi) << "\">\n";
  os << "<title>Knowledge mastery heatmap</title>\n";
  os << "<g font-family=\"sans-serif\" font-size=\"10\">\n";
  for (std::size_t c = 0; c < g.cols.size(); ++c) {
    const int x = kLeftMargin + kCell * static_cast<int>(c) + kCell / 2;
    os << "<text x=\"" << x << "\" y=\"" << kTopMargin - 4 << "\" transform=\"rotate(-60 " << x << ' '
       << kTopMargin - 4 << ")\">" << xml_escape(g.cols[c]) << "</text>\n";
  }
  for (std::size_t r = 0; r < g.rows.size(); ++r) {
    const int y = kTopMargin + kCell * static_cast<int>(r);
    os << "<text x=\"" << kLeftMargin - 6 << "\" y=\"" << y + kCell - 3 << "\" text-anchor=\"end\">"
       << xml_escape(g.rows[r]) << "</text>\n";
    for (std::size_t c = 0; c < g.cols.size(); ++c) {
      const double v = g.values(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c));
      os << "<rect x=\"" << kLeftMargin + kCell * static_cast<int>(c) << "\" y=\"" << y << "\" width=\"" << kCell
         << "\" height=\"" << kCell << "\" fill=\"" << heatmap_color(v, g.lo, g.hi) << "\" data-model=\""
         << xml_escape(g.rows[r]) << "\" data-concept=\"" << xml_escape(g.cols[c]) << "\" data-value=\""
         << format_double(v) << "\"/>\n";
    }
  }
  // Legend: 11 swatches across the scale.
  const int ly = kTopMargin + kCell * static_cast<int>(g.rows.size()) + 12;
  for (int s = 0; s <= 10; ++s) {
    const double v = g.lo + (g.hi - g.lo) * s / 10.0;
    os << "<rect x=\"" << kLeftMargin + 12 * s << "\" y=\"" << ly << "\" width=\"12\" height=\"10\" fill=\""
       << heatmap_color(v, g.lo, g.hi) << "\" data-legend-value=\"" << format_double(v) << "\"/>\n";
  }
  os << "<text x=\"" << kLeftMargin - 6 << "\" y=\"" << ly + 9 << "\" text-anchor=\"end\">" << format_double(g.lo)
     << "</text>\n";
  os << "<text x=\"" << kLeftMargin + 12 * 11 + 4 << "\" y=\"" << ly + 9 << "\">" << format_double(g.hi)
     << "</text>\n";
  os << "</g>\n</svg>\n";
  return os.str();
}

std::string sha256_hex(std::string_view bytes) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), digest, &len, EVP_sha256(), nullptr) != 1)
    fail(ErrorKind::numeric, "sha256: digest failed");
  std::ostringstream os;
  for (unsigned int i = 0; i < len; ++i) os << std::hex << std::setw(2) << std::setfill('0') << int(digest[i]);
  return os.str();
}

std::string sha256_file(const std::filesystem::path& path) { return sha256_hex(read_text_file(path)); }

std::string utc_timestamp() {
  const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  std::ostringstream os;
  os << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ");
  return os.str();
}

const char* tool_version() { return "0.1.0"; }

void RunManifest::write(const std::filesystem::path& dir) const {
  using nlohmann::json;
  json cfg = json::object();
  for (const auto& [k, v] : config) cfg[k] = v;
  json ins = json::array();
  for (const auto& p : inputs) ins.push_back({{"path", p.string()}, {"sha256", sha256_file(p)}});
  json doc{{"format_version", 1},
           {"command", command},
           {"config", cfg},
           {"inputs", ins},
           {"seed", has_seed ? json(seed) : json(nullptr)},
           {"tool_version", tool_version()},
           {"started_at", started_at.empty() ? utc_timestamp() : started_at},
           {"finished_at", utc_timestamp()}};
  std::filesystem::create_directories(dir);
  write_text_file(dir / "manifest.json", doc.dump(2) + "\n");
}

}  // namespace cdm
