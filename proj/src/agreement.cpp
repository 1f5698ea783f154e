#include <map>

#include <json.hpp>

#include "cdmkit/metrics.hpp"
#include "csv.hpp"

namespace cdm {

namespace {

double distance_between(const Coding& a, const Coding& b, AgreementDistance d) {
  if (a == b) return 0.0;
  if (d == AgreementDistance::nominal) return 1.0;
  std::size_t common = 0;
  for (const auto& x : a) common += b.count(x);
  const std::size_t uni = a.size() + b.size() - common;
  return uni == 0 ? 0.0 : 1.0 - static_cast<double>(common) / static_cast<double>(uni);
}

}  // namespace

AgreementReport krippendorff_alpha(const AnnotationTable& table, AgreementDistance distance) {
  AgreementReport r;
  r.distance = distance;
  for (const auto& unit : table) r.n_coders = std::max(r.n_coders, unit.size());
  require(r.n_coders >= 2, "krippendorff_alpha: need at least two coders");

  // Distinct codings get an index; each pairable value is counted once.
  std::map<Coding, std::size_t> index;
  std::vector<Coding> values;
  std::vector<double> totals;  // n_c, pairable occurrences per coding
  double observed = 0.0;       // sum_u (1/(m_u-1)) sum_{ordered pairs} delta
  double n = 0.0;

  for (const auto& unit : table) {
    std::vector<std::size_t> present;
    for (const auto& cell : unit) {
      if (!cell) continue;
      if (distance == AgreementDistance::nominal && cell->size() != 1)
        fail(ErrorKind::invalid_argument, "krippendorff_alpha: nominal distance needs exactly one label per coding");
      auto [it, inserted] = index.emplace(*cell, values.size());
      if (inserted) {
        values.push_back(*cell);
        totals.push_back(0.0);
      }
      present.push_back(it->second);
    }
    const auto m = present.size();
    if (m < 2) continue;
    ++r.n_units;
    double within = 0.0;
    for (std::size_t a = 0; a < m; ++a)
      for (std::size_t b = 0; b < m; ++b)
        if (a != b) within += distance_between(values[present[a]], values[present[b]], distance);
    observed += within / static_cast<double>(m - 1);
    for (auto v : present) totals[v] += 1.0;
    n += static_cast<double>(m);
  }
  if (r.n_units == 0) fail(ErrorKind::invalid_argument, "krippendorff_alpha: no unit has two or more codings");
  r.n_pairable = static_cast<std::size_t>(n);

  double expected = 0.0;
  for (std::size_t a = 0; a < values.size(); ++a)
    for (std::size_t b = 0; b < values.size(); ++b)
      if (a != b) expected += totals[a] * totals[b] * distance_between(values[a], values[b], distance);

  const double d_o = observed / n;
  const double d_e = expected / (n * (n - 1.0));
  if (d_e == 0.0)
    fail(ErrorKind::numeric, "krippendorff_alpha: zero expected disagreement (a single value was used), alpha undefined");
  r.alpha = 1.0 - d_o / d_e;
  return r;
}

AnnotationTable read_annotation_csv(const std::filesystem::path& path, std::size_t* n_coders) {
  auto rows = csv::parse(read_text_file(path));
  if (rows.size() < 2) fail(ErrorKind::parse, path.string() + ": need a header row and at least one unit");
  const std::size_t coders = rows.front().size() - 1;
  if (coders < 2) fail(ErrorKind::parse, path.string() + ": need at least two coder columns");
  AnnotationTable table;
  for (std::size_t r = 1; r < rows.size(); ++r) {
    const auto& row = rows[r];
    if (row.size() != coders + 1)
      fail(ErrorKind::parse, path.string() + ": row " + std::to_string(r + 1) + " has " + std::to_string(row.size()) +
                                 " fields, expected " + std::to_string(coders + 1));
    std::vector<std::optional<Coding>> unit;
    for (std::size_t c = 1; c < row.size(); ++c) {
      Coding labels;
      std::string cur;
      auto flush = [&] {
        const auto b = cur.find_first_not_of(" \t");
        if (b != std::string::npos) labels.insert(cur.substr(b, cur.find_last_not_of(" \t") - b + 1));
        cur.clear();
      };
      for (char ch : row[c]) {
        if (ch == ';') flush();
        else cur.push_back(ch);
      }
      flush();
      if (labels.empty()) unit.emplace_back(std::nullopt);
      else unit.emplace_back(std::move(labels));
    }
    table.push_back(std::move(unit));
  }
  if (n_coders) *n_coders = coders;
  return table;
}

std::string to_json(const AgreementReport& r) {
  return nlohmann::json{{"format_version", 1},
                        {"krippendorff_alpha", r.alpha},
                        {"n_units", r.n_units},
                        {"n_coders", r.n_coders},
                        {"n_pairable", r.n_pairable},
                        {"distance", r.distance == AgreementDistance::nominal ? "nominal" : "jaccard"}}
             .dump(2) +
         "\n";
}

}  // namespace cdm
