#include "cdmkit/matrix.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <system_error>

#include "cdmkit/error.hpp"
#include "csv.hpp"

namespace cdm {

std::string format_double(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  if (v == 0.0) return "0";  // folds -0
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

double parse_double(std::string_view text) {
  while (!text.empty() && (text.front() == ' ' || text.front() == '\t')) text.remove_prefix(1);
  while (!text.empty() && (text.back() == ' ' || text.back() == '\t')) text.remove_suffix(1);
  if (!text.empty() && text.front() == '+') text.remove_prefix(1);
  double v = 0.0;
  auto res = std::from_chars(text.data(), text.data() + text.size(), v);
  if (res.ec != std::errc{} || res.ptr != text.data() + text.size())
    fail(ErrorKind::parse, "not a number: '" + std::string(text) + "'");
  return v;
}

std::vector<std::string> sequential_ids(std::string_view prefix, std::size_t n) {
  const auto width = std::to_string(n == 0 ? 0 : n - 1).size();
  std::vector<std::string> ids;
  ids.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    std::ostringstream os;
    os << prefix << std::setw(static_cast<int>(width)) << std::setfill('0') << i;
    ids.push_back(os.str());
  }
  return ids;
}

void write_text_file(const std::filesystem::path& path, std::string_view text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(ErrorKind::io, "cannot open for writing: " + path.string());
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  if (!out) fail(ErrorKind::io, "write failed: " + path.string());
}

std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::io, "cannot open: " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

LabeledMatrix read_matrix_csv(const std::filesystem::path& path) {
  const auto rows = csv::parse(read_text_file(path));
  if (rows.empty()) fail(ErrorKind::parse, path.string() + ": empty matrix file");

  LabeledMatrix m;
  const auto& header = rows.front();
  if (header.empty()) fail(ErrorKind::parse, path.string() + ": empty header");
  m.corner = header.front();
  m.col_ids.assign(header.begin() + 1, header.end());

  const auto n_rows = rows.size() - 1;
  const auto n_cols = m.col_ids.size();
  m.values.resize(static_cast<Eigen::Index>(n_rows), static_cast<Eigen::Index>(n_cols));
  m.row_ids.reserve(n_rows);
  for (std::size_t r = 1; r < rows.size(); ++r) {
    const auto& row = rows[r];
    if (row.size() != n_cols + 1)
      fail(ErrorKind::parse, path.string() + ": row " + std::to_string(r + 1) + " has " +
                                 std::to_string(row.size()) + " fields, expected " +
                                 std::to_string(n_cols + 1));
    m.row_ids.push_back(row.front());
    for (std::size_t c = 0; c < n_cols; ++c) {
      try {
        m.values(static_cast<Eigen::Index>(r - 1), static_cast<Eigen::Index>(c)) =
            parse_double(row[c + 1]);
      } catch (const Error& e) {
        fail(ErrorKind::parse, path.string() + ": row " + std::to_string(r + 1) + ", column " +
                                   std::to_string(c + 2) + ": " + e.what());
      }
    }
  }
  return m;
}

void write_matrix_csv(const std::filesystem::path& path, const LabeledMatrix& m) {
  if (m.row_ids.size() != static_cast<std::size_t>(m.rows()) ||
      m.col_ids.size() != static_cast<std::size_t>(m.cols()))
    fail(ErrorKind::dimension, "matrix ids do not match its shape for " + path.string());
  std::string out;
  csv::Row header{m.corner};
  header.insert(header.end(), m.col_ids.begin(), m.col_ids.end());
  out += csv::join(header) + "\n";
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    out += csv::quote(m.row_ids[static_cast<std::size_t>(i)]);
    for (Eigen::Index j = 0; j < m.cols(); ++j) {
      out.push_back(',');
      out += format_double(m.values(i, j));
    }
    out.push_back('\n');
  }
  write_text_file(path, out);
}

}  // namespace cdm
