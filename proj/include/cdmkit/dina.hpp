#pragma once

// DINA (deterministic inputs, noisy "and" gate) model for small concept
// counts: exhaustive profile inference and EM estimation of slip/guess.

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "cdmkit/error.hpp"
#include "cdmkit/matrix.hpp"

namespace cdm::dina {

inline constexpr int kMaxConcepts = 16;
inline constexpr double kParamFloor = 0.001;
inline constexpr double kParamCeil = 0.999;

struct Params {
  std::vector<double> slip;   // per item, in [0,1)
  std::vector<double> guess;  // per item, in [0,1)

  static Params uniform(std::size_t items, double slip, double guess);
  /// Throws invalid_argument unless every s_i, g_i lies in [0,1) with s_i + g_i < 1.
  void validate() const;
};

/// alpha[k] = 1 iff concept k is mastered. Profile index bit k <-> alpha[k].
using Profile = std::vector<std::uint8_t>;

Profile profile_from_index(std::uint32_t index, int concepts);
std::uint32_t profile_index(const Profile& alpha);

/// (1 - s) when alpha covers every required concept in q_row, else g.
double response_prob(const Profile& alpha, std::span<const double> q_row, double slip, double guess);

struct Inference {
  Profile map;
  std::vector<double> posterior;  // size 2^K, indexed by profile_index
  bool tie = false;               // several profiles share the MAP likelihood
};

/// Exhaustive posterior over all 2^K profiles under a uniform prior for one
/// learner's binary responses (length M). MAP ties go to the profile with
/// fewest mastered concepts, then lexicographically smallest alpha.
Inference infer_profile(std::span<const int> responses, const Matrix& q, const Params& params);

struct FitResult {
  Params params;
  Matrix posteriors;  // N x 2^K
  std::vector<Profile> map_profiles;
  std::vector<double> loglik_trace;  // marginal log-likelihood at each visited parameter set
  int iterations_run = 0;
  bool converged = false;
  Warnings warnings;
};

/// EM for slip/guess with a fixed uniform profile prior. `x` is M x N
/// binary (items x learners). Parameters are clamped to [0.001, 0.999] and
/// s + g < 1; a clamped update is only kept if it does not lower the
/// expected complete-data log-likelihood.
FitResult em_fit(const Matrix& x, const Matrix& q, int max_iters = 500, double tol = 1e-8,
                 const Params* init = nullptr);

double marginal_loglik(const Matrix& x, const Matrix& q, const Params& params);

struct Simulation {
  Matrix x;                       // M x N binary
  std::vector<Profile> profiles;  // planted, one per learner
};

/// Learners master each concept independently with `mastery_rate`.
Simulation simulate(const Matrix& q, const Params& params, int learners, std::uint64_t seed,
                    double mastery_rate = 0.5);

/// Majority reading of fractional scores: x >= 0.5 -> 1.
Matrix binarize_scores(const Matrix& x);

/// params, MAP profiles and posteriors as JSON.
std::string to_json(const FitResult& r, const std::vector<std::string>& item_ids,
                    const std::vector<std::string>& learner_ids, const std::vector<std::string>& concept_ids);

}  // namespace cdm::dina
