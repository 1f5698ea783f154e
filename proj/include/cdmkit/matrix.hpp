#pragma once

#include <Eigen/Dense>

#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace cdm {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

/// Dense matrix with row and column identifiers, the unit of CSV exchange.
/// The CSV layout is a header row `corner,col_0,col_1,...` followed by one
/// row per `row_id,v_0,v_1,...`.
struct LabeledMatrix {
  std::string corner = "id";
  std::vector<std::string> row_ids;
  std::vector<std::string> col_ids;
  Matrix values;

  Eigen::Index rows() const { return values.rows(); }
  Eigen::Index cols() const { return values.cols(); }
};

LabeledMatrix read_matrix_csv(const std::filesystem::path& path);
void write_matrix_csv(const std::filesystem::path& path, const LabeledMatrix& m);

inline std::span<const double> as_span(const Vector& v) {
  return {v.data(), static_cast<std::size_t>(v.size())};
}

/// Shortest decimal text that parses back to the same double.
std::string format_double(double v);
double parse_double(std::string_view text);

/// "prefix0000"-style identifiers, zero-padded to a common width.
std::vector<std::string> sequential_ids(std::string_view prefix, std::size_t n);

void write_text_file(const std::filesystem::path& path, std::string_view text);
std::string read_text_file(const std::filesystem::path& path);

}  // namespace cdm
