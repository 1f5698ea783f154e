#pragma once

// Planted-truth fixtures drawn from the generative process behind the
// co-factorization: Gamma-distributed item, model and concept vectors,
// Bernoulli responses through sigma(e_i . u_j), concept tags through
// sigma(e_i . v_k).

#include <cstdint>
#include <filesystem>
#include <optional>
#include <vector>

#include "cdmkit/data_model.hpp"
#include "cdmkit/mcf.hpp"

namespace cdm {

enum class ResponseMode { bernoulli, mean };
enum class QMode { threshold, sampled };

struct SimConfig {
  int items = 210;    // M
  int models = 30;    // N
  int concepts = 70;  // K
  int latent_dim = 5; // T*
  GammaPrior prior_e{1.0, 1.0};
  GammaPrior prior_u{5.0, 5.0};
  GammaPrior prior_v{1.0, 1.0};
  std::uint64_t seed = 0;
  double q_threshold = 0.95;
  QMode q_mode = QMode::threshold;
  ResponseMode response_mode = ResponseMode::mean;
  int repeats = kDefaultRepeats;

  void validate() const;
};

struct SimOutput {
  FactorSet truth;     // E*, U*, V*
  Matrix X;            // M x N
  Matrix W;            // all ones
  Matrix Q;            // M x K binary, no empty rows
  Matrix p_response;   // sigma(E* U*)
  Matrix p_mastery;    // sigma(U*^T V*), N x K
  std::vector<std::string> item_ids;
  std::vector<std::string> model_ids;
  std::vector<std::string> concept_ids;
};

double sigmoid(double z);

/// Deterministic in `cfg` (seed included). Items whose tag row comes out
/// empty are redrawn; 1000 failed redraws of one item is an error.
SimOutput simulate(const SimConfig& cfg);

struct RecoveryScore {
  std::vector<std::optional<double>> per_model;  // absent for constant rows
  std::optional<double> overall;                 // mean of the defined ones
  Warnings warnings;
};

/// Spearman correlation of each row of `fitted` against the planted
/// mastery probabilities.
RecoveryScore recovery_score(const Matrix& fitted, const Matrix& planted_mastery);
inline RecoveryScore recovery_score(const MasteryMatrix& fitted, const SimOutput& truth) {
  return recovery_score(fitted.prob, truth.p_mastery);
}

/// Synthetic item bank matching a simulation: one concept per Q column,
/// answer keys "A".
ItemBank stub_item_bank(const SimOutput& out);

/// bank.json, X.csv, W.csv, Q.csv, truth.json.
void save_simulation(const std::filesystem::path& dir, const SimOutput& out, const SimConfig& cfg);
SimOutput load_truth(const std::filesystem::path& truth_json);

}  // namespace cdm
