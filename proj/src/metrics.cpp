#include "cdmkit/metrics.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <iomanip>
#include <numeric>
#include <sstream>

#include <json.hpp>

#include "csv.hpp"

namespace cdm {

using nlohmann::json;

std::vector<double> mid_ranks(std::span<const double> values) {
  const std::size_t n = values.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return values[a] < values[b]; });
  std::vector<double> ranks(n);
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    while (j + 1 < n && values[order[j + 1]] == values[order[i]]) ++j;
    const double r = 0.5 * static_cast<double>(i + j) + 1.0;  // mean of ranks i+1..j+1
    for (std::size_t t = i; t <= j; ++t) ranks[order[t]] = r;
    i = j + 1;
  }
  return ranks;
}

namespace {

void check_labels(std::span<const double> scores, std::span<const int> labels) {
  if (scores.size() != labels.size())
    fail(ErrorKind::dimension, "auc: " + std::to_string(scores.size()) + " scores but " +
                                   std::to_string(labels.size()) + " labels");
  for (int l : labels)
    if (l != 0 && l != 1) fail(ErrorKind::invalid_argument, "auc: labels must be 0 or 1");
}

}  // namespace

std::optional<double> auc(std::span<const double> scores, std::span<const int> labels) {
  check_labels(scores, labels);
  const auto ranks = mid_ranks(scores);
  double pos_rank_sum = 0.0;
  std::size_t n_pos = 0;
  for (std::size_t i = 0; i < ranks.size(); ++i)
    if (labels[i] == 1) {
      pos_rank_sum += ranks[i];
      ++n_pos;
    }
  const std::size_t n_neg = labels.size() - n_pos;
  if (n_pos == 0 || n_neg == 0) return std::nullopt;
  const double np = static_cast<double>(n_pos), nn = static_cast<double>(n_neg);
  return (pos_rank_sum - np * (np + 1.0) / 2.0) / (np * nn);
}

std::optional<double> auc_pairwise(std::span<const double> scores, std::span<const int> labels) {
  check_labels(scores, labels);
  double credit = 0.0;
  std::size_t pairs = 0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (labels[i] != 1) continue;
    for (std::size_t j = 0; j < scores.size(); ++j) {
      if (labels[j] != 0) continue;
      ++pairs;
      if (scores[i] > scores[j]) credit += 1.0;
      else if (scores[i] == scores[j]) credit += 0.5;
    }
  }
  if (pairs == 0) return std::nullopt;
  return credit / static_cast<double>(pairs);
}

std::optional<double> spearman(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size())
    fail(ErrorKind::dimension, "spearman: lengths " + std::to_string(a.size()) + " and " + std::to_string(b.size()));
  if (a.size() < 2) return std::nullopt;
  const auto ra = mid_ranks(a), rb = mid_ranks(b);
  const double mean = 0.5 * static_cast<double>(a.size() + 1);
  double sab = 0.0, saa = 0.0, sbb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double da = ra[i] - mean, db = rb[i] - mean;
    sab += da * db;
    saa += da * da;
    sbb += db * db;
  }
  if (saa == 0.0 || sbb == 0.0) return std::nullopt;
  return sab / std::sqrt(saa * sbb);
}

// ---------------------------------------------------------------------------

ReconstructionReport reconstruction_metrics(const Matrix& x_hat, const Matrix& x, const Matrix& w,
                                            double threshold) {
  if (x_hat.rows() != x.rows() || x_hat.cols() != x.cols() || w.rows() != x.rows() || w.cols() != x.cols())
    fail(ErrorKind::dimension, "reconstruction_metrics: X_hat, X and W must share a shape");
  ReconstructionReport r;
  r.binarize_threshold = threshold;
  std::vector<double> scores;
  std::vector<int> labels;
  std::size_t hits = 0;
  double sq = 0.0;
  for (Eigen::Index j = 0; j < x.cols(); ++j)
    for (Eigen::Index i = 0; i < x.rows(); ++i) {
      if (!(w(i, j) > 0.0)) continue;
      const int label = x(i, j) >= threshold ? 1 : 0;
      const int predicted = x_hat(i, j) >= threshold ? 1 : 0;
      hits += label == predicted ? 1 : 0;
      const double d = x_hat(i, j) - x(i, j);
      sq += d * d;
      scores.push_back(x_hat(i, j));
      labels.push_back(label);
    }
  r.n_cells = scores.size();
  if (r.n_cells == 0) fail(ErrorKind::invalid_argument, "reconstruction_metrics: no observed cells (W > 0)");
  r.accuracy = static_cast<double>(hits) / static_cast<double>(r.n_cells);
  r.rmse = std::sqrt(sq / static_cast<double>(r.n_cells));
  r.auc = auc(scores, labels);
  if (!r.auc) r.warnings.push_back("reconstruction_metrics: all labels identical, AUC undefined");
  return r;
}

std::string to_json(const ReconstructionReport& r) {
  json doc{{"format_version", 1},
           {"accuracy", r.accuracy},
           {"auc", r.auc ? json(*r.auc) : json(nullptr)},
           {"rmse", r.rmse},
           {"n_cells", r.n_cells},
           {"binarize_threshold", r.binarize_threshold},
           {"warnings", r.warnings}};
  return doc.dump(2) + "\n";
}

// ---------------------------------------------------------------------------

ConceptCountReport concept_counts(const Matrix& prob, const std::vector<std::string>& model_ids, double threshold) {
  if (model_ids.size() != static_cast<std::size_t>(prob.rows()))
    fail(ErrorKind::dimension, "concept_counts: " + std::to_string(model_ids.size()) + " ids for " +
                                   std::to_string(prob.rows()) + " rows");
  ConceptCountReport r;
  r.threshold = threshold;
  for (Eigen::Index j = 0; j < prob.rows(); ++j) {
    ConceptCountRow row;
    row.model_id = model_ids[static_cast<std::size_t>(j)];
    row.total = static_cast<int>(prob.cols());
    row.mastered = static_cast<int>((prob.row(j).array() > threshold).count());
    row.mean_score = prob.cols() > 0 ? prob.row(j).mean() : 0.0;
    r.rows.push_back(std::move(row));
  }
  std::sort(r.rows.begin(), r.rows.end(), [](const ConceptCountRow& a, const ConceptCountRow& b) {
    if (a.mastered != b.mastered) return a.mastered > b.mastered;
    if (a.mean_score != b.mean_score) return a.mean_score > b.mean_score;
    return a.model_id < b.model_id;
  });
  return r;
}

void attach_observed_scores(ConceptCountReport& report, const std::vector<std::string>& model_ids, const Matrix& x,
                            const Matrix& w) {
  if (x.cols() != static_cast<Eigen::Index>(model_ids.size()) || w.rows() != x.rows() || w.cols() != x.cols())
    fail(ErrorKind::dimension, "attach_observed_scores: response matrix does not match model ids");
  for (auto& row : report.rows) {
    auto it = std::find(model_ids.begin(), model_ids.end(), row.model_id);
    if (it == model_ids.end()) continue;
    const auto j = static_cast<Eigen::Index>(it - model_ids.begin());
    double sum = 0.0, correct = 0.0;
    int cells = 0;
    for (Eigen::Index i = 0; i < x.rows(); ++i) {
      if (!(w(i, j) > 0.0)) continue;
      sum += x(i, j);
      correct += x(i, j) >= 0.5 ? 1.0 : 0.0;
      ++cells;
    }
    if (cells > 0) {
      row.observed_score = sum / cells;
      row.observed_accuracy = correct / cells;
    }
  }
}

std::string to_json(const ConceptCountReport& r) {
  json rows = json::array();
  for (const auto& row : r.rows) {
    json o{{"model_id", row.model_id},
           {"mastered", row.mastered},
           {"total", row.total},
           {"mean_mastery", row.mean_score}};
    o["observed_score"] = row.observed_score ? json(*row.observed_score) : json(nullptr);
    o["observed_accuracy"] = row.observed_accuracy ? json(*row.observed_accuracy) : json(nullptr);
    rows.push_back(std::move(o));
  }
  return json{{"format_version", 1}, {"threshold", r.threshold}, {"rows", rows}}.dump(2) + "\n";
}

std::string to_csv(const ConceptCountReport& r) {
  std::string out = "rank,model_id,mastered,total,mean_mastery,observed_score,observed_accuracy\n";
  int rank = 1;
  for (const auto& row : r.rows) {
    out += std::to_string(rank++) + "," + csv::quote(row.model_id) + "," + std::to_string(row.mastered) + "," +
           std::to_string(row.total) + "," + format_double(row.mean_score) + "," +
           (row.observed_score ? format_double(*row.observed_score) : "") + "," +
           (row.observed_accuracy ? format_double(*row.observed_accuracy) : "") + "\n";
  }
  return out;
}

std::string render_table(const ConceptCountReport& r) {
  std::vector<std::array<std::string, 3>> cells;
  cells.push_back({"Con", "Model", "Acc"});
  for (const auto& row : r.rows) {
    std::ostringstream acc;
    if (row.observed_score) acc << std::fixed << std::setprecision(4) << *row.observed_score;
    else acc << "-";
    cells.push_back({std::to_string(row.mastered) + "/" + std::to_string(row.total), row.model_id, acc.str()});
  }
  std::array<std::size_t, 3> width{};
  for (const auto& c : cells)
    for (std::size_t i = 0; i < 3; ++i) width[i] = std::max(width[i], c[i].size());
  std::ostringstream os;
  os << "# concepts with mastery > " << format_double(r.threshold) << "\n";
  for (std::size_t line = 0; line < cells.size(); ++line) {
    const auto& c = cells[line];
    os << std::right << std::setw(static_cast<int>(width[0])) << c[0] << "  " << std::left
       << std::setw(static_cast<int>(width[1])) << c[1] << "  " << std::right << std::setw(static_cast<int>(width[2]))
       << c[2] << "\n";
    if (line == 0) os << std::string(width[0] + width[1] + width[2] + 4, '-') << "\n";
  }
  return os.str();
}

}  // namespace cdm
