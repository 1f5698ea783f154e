#pragma once

// Weighted non-negative matrix co-factorization:
//
//   min_{E,U,V >= 0}  ||W o (X - EU)||_F^2 + beta ||Q - EV||_F^2
//                     + lambda_e ||E||_F^2 + lambda_u ||U||_F^2 + lambda_v ||V||_F^2
//
// with E (items x skills), U (skills x models), V (skills x concepts). The
// mastery matrix is F = U^T V (models x concepts).

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "cdmkit/error.hpp"
#include "cdmkit/matrix.hpp"

namespace cdm {

enum class InitMode { gamma_prior, uniform };

/// Shape-rate parameterization; mean = shape / rate.
struct GammaPrior {
  double shape = 1.0;
  double rate = 1.0;
};

struct McfConfig {
  int latent_dim = 16;  // T
  double beta = 1.0;
  double lambda_e = 0.01;
  double lambda_u = 0.01;
  double lambda_v = 0.01;
  int max_iters = 2000;
  double tol = 1e-6;
  double epsilon = 1e-12;
  std::uint64_t seed = 0;
  InitMode init = InitMode::gamma_prior;
  GammaPrior prior_e;
  GammaPrior prior_u;
  GammaPrior prior_v;

  /// Throws invalid_argument naming the first out-of-range field.
  void validate() const;
};

struct FactorSet {
  Matrix E;  // M x T
  Matrix U;  // T x N
  Matrix V;  // T x K

  int latent_dim() const { return static_cast<int>(E.cols()); }
};

struct FitResult {
  FactorSet factors;
  std::vector<double> objective_trace;  // initial value first
  int iterations_run = 0;
  bool converged = false;
  std::uint64_t seed = 0;  // seed of the run that produced `factors`

  double final_objective() const { return objective_trace.back(); }
};

/// Input bundle shared by the solver entry points.
struct McfProblem {
  const Matrix& X;  // M x N in [0,1]
  const Matrix& W;  // M x N in [0,1]
  const Matrix& Q;  // M x K binary
};

double objective(const FactorSet& f, const McfProblem& p, const McfConfig& cfg);

/// Analytic gradient of `objective` with respect to E, U and V.
FactorSet objective_gradient(const FactorSet& f, const McfProblem& p, const McfConfig& cfg);

/// Seeded draw of the starting factors for an M x N x K problem.
FactorSet initial_factors(Eigen::Index m, Eigen::Index n, Eigen::Index k, const McfConfig& cfg);

/// One round of multiplicative updates, E then U then V, in place.
void multiplicative_step(FactorSet& f, const McfProblem& p, const McfConfig& cfg);

/// Runs multiplicative updates from `initial_factors` until the relative
/// objective decrease drops below `cfg.tol` or `cfg.max_iters` is reached.
/// Throws numeric if a NaN/Inf appears, invalid_argument for an all-zero W.
FitResult fit(const McfProblem& p, const McfConfig& cfg);

/// `starts` fits seeded cfg.seed, cfg.seed+1, ...; keeps the lowest final
/// objective (ties: lowest seed). Failed starts are skipped unless all fail.
FitResult multistart_fit(const McfProblem& p, const McfConfig& cfg, int starts);

struct Prediction {
  Matrix scores;  // clip(EU, 0, 1)
  std::size_t clipped_low = 0;
  std::size_t clipped_high = 0;
};

Prediction predict_scores(const FactorSet& f);

enum class Normalization { clip, minmax_global, minmax_per_concept };

std::string to_string(Normalization n);
Normalization parse_normalization(const std::string& tag);

struct MasteryMatrix {
  Matrix raw;   // F = U^T V, N x K
  Matrix prob;  // normalized into [0,1]
  Normalization normalization = Normalization::clip;
  Warnings warnings;
};

MasteryMatrix mastery(const FactorSet& f, Normalization mode = Normalization::clip);
MasteryMatrix normalize_mastery(const Matrix& raw, Normalization mode);

// ---------------------------------------------------------------------------
// Serialization

struct FitIds {
  std::vector<std::string> items;
  std::vector<std::string> models;
  std::vector<std::string> concepts;
};

/// E.csv, U.csv, V.csv, trace.csv and fit.json (config, seed, trace and
/// prediction clipping counts).
void save_fit(const std::filesystem::path& dir, const FitResult& r, const McfConfig& cfg, const FitIds& ids);

struct LabeledMastery {
  std::vector<std::string> model_ids;
  std::vector<std::string> concept_ids;
  MasteryMatrix mastery;
};

/// mastery.json plus F_raw.csv and F_prob.csv.
void save_mastery(const std::filesystem::path& dir, const LabeledMastery& m);
/// Reads mastery.json; an unknown normalization tag is a parse error.
LabeledMastery load_mastery(const std::filesystem::path& path);

}  // namespace cdm
