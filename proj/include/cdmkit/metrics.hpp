#pragma once

#include <cstddef>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "cdmkit/error.hpp"
#include "cdmkit/matrix.hpp"
#include "cdmkit/mcf.hpp"

namespace cdm {

// ---------------------------------------------------------------------------
// Ranking statistics

/// Mann-Whitney AUC via mid-ranks, O(n log n). Ties between a positive and
/// a negative score count 0.5. Empty optional when one class is missing.
std::optional<double> auc(std::span<const double> scores, std::span<const int> labels);
/// Same quantity by comparing every positive/negative pair, O(n^2).
std::optional<double> auc_pairwise(std::span<const double> scores, std::span<const int> labels);

/// Average ranks (1-based) with ties sharing their mean rank.
std::vector<double> mid_ranks(std::span<const double> values);
/// Pearson correlation of mid-ranks; empty when either side is constant.
std::optional<double> spearman(std::span<const double> a, std::span<const double> b);

// ---------------------------------------------------------------------------
// Reconstruction

struct ReconstructionReport {
  double accuracy = 0.0;
  std::optional<double> auc;
  double rmse = 0.0;
  std::size_t n_cells = 0;
  double binarize_threshold = 0.5;
  Warnings warnings;
};

/// Scores only cells with W > 0. Labels are X >= threshold; accuracy
/// compares them with X_hat >= threshold; RMSE uses the raw values.
ReconstructionReport reconstruction_metrics(const Matrix& x_hat, const Matrix& x, const Matrix& w,
                                            double binarize_threshold = 0.5);
std::string to_json(const ReconstructionReport& r);

// ---------------------------------------------------------------------------
// Concept counts

struct ConceptCountRow {
  std::string model_id;
  int mastered = 0;
  int total = 0;
  double mean_score = 0.0;  // mean F_prob across concepts
  // Observed response summaries, present when a response matrix is given:
  // mean fractional score and mean binarized accuracy over observed cells.
  std::optional<double> observed_score;
  std::optional<double> observed_accuracy;
};

struct ConceptCountReport {
  double threshold = 0.9;
  std::vector<ConceptCountRow> rows;  // descending by mastered
};

/// mastered = #{k : F_prob[j][k] > threshold}. Rows are sorted by mastered
/// (desc), then mean_score (desc), then model_id.
ConceptCountReport concept_counts(const Matrix& prob, const std::vector<std::string>& model_ids,
                                  double threshold = 0.9);
/// Adds observed_score/observed_accuracy; X and W are items x models with
/// columns in `model_ids` order.
void attach_observed_scores(ConceptCountReport& report, const std::vector<std::string>& model_ids,
                            const Matrix& x, const Matrix& w);

std::string to_json(const ConceptCountReport& r);
std::string to_csv(const ConceptCountReport& r);
/// Aligned plain-text table: Con | Model | Acc.
std::string render_table(const ConceptCountReport& r);

// ---------------------------------------------------------------------------
// Inter-annotator agreement

enum class AgreementDistance { nominal, jaccard };

/// One coding: a single label (nominal) or a label set (jaccard).
using Coding = std::set<std::string>;
/// units x coders; an empty optional is a missing coding.
using AnnotationTable = std::vector<std::vector<std::optional<Coding>>>;

struct AgreementReport {
  double alpha = 0.0;
  std::size_t n_units = 0;   // units with at least two codings
  std::size_t n_coders = 0;
  std::size_t n_pairable = 0;
  AgreementDistance distance = AgreementDistance::nominal;
};

/// Krippendorff's alpha = 1 - D_o / D_e over the coincidences of pairable
/// values. Nominal distance is 0/1 on equality; Jaccard distance is
/// 1 - |a n b| / |a u b|.
AgreementReport krippendorff_alpha(const AnnotationTable& table, AgreementDistance distance);

/// CSV with a header row (unit, coder...) and one row per unit; empty cells
/// are missing, label sets are ';'-joined.
AnnotationTable read_annotation_csv(const std::filesystem::path& path, std::size_t* n_coders = nullptr);
std::string to_json(const AgreementReport& r);

// ---------------------------------------------------------------------------
// Clustering

struct Merge {
  int left = 0;   // cluster ids: leaves 0..n-1, merges n, n+1, ...
  int right = 0;
  double distance = 0.0;
  int size = 0;
};

struct ClusterResult {
  std::vector<int> assignment;        // per input row; -1 if excluded
  std::vector<std::size_t> included;  // input rows that were clustered
  std::vector<Merge> merges;
  int n_clusters = 0;
  Warnings warnings;
};

double cosine_distance(std::span<const double> a, std::span<const double> b);

/// Average-linkage agglomerative clustering of the rows of `profiles` under
/// cosine distance, cut at `n_clusters`. All-zero rows are excluded with a
/// warning. Distance ties merge the lowest (left, right) id pair first.
/// Cluster labels are numbered by their smallest member row.
ClusterResult cluster_models(const Matrix& profiles, int n_clusters);
std::string to_json(const ClusterResult& r, const std::vector<std::string>& model_ids);

}  // namespace cdm
