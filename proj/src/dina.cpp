#include "cdmkit/dina.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <random>
#include <set>

#include <json.hpp>

namespace cdm::dina {

namespace {

constexpr double kTiny = 1e-300;  // keeps log() finite when s or g is exactly 0
constexpr double kMaxSum = kParamCeil;  // s + g never exceeds this after clamping

double safe_log(double p) { return std::log(std::max(p, kTiny)); }

void check_q(const Matrix& q) {
  if (q.cols() < 1) fail(ErrorKind::dimension, "dina: Q has no concept columns");
  if (q.cols() > kMaxConcepts)
    fail(ErrorKind::unsupported, "dina: " + std::to_string(q.cols()) + " concepts exceed the exhaustive limit of " +
                                     std::to_string(kMaxConcepts) + "; use the co-factorization solver instead");
  for (Eigen::Index i = 0; i < q.rows(); ++i) {
    bool any = false;
    for (Eigen::Index k = 0; k < q.cols(); ++k) {
      if (q(i, k) != 0.0 && q(i, k) != 1.0) fail(ErrorKind::validation, "dina: Q must be binary");
      any = any || q(i, k) == 1.0;
    }
    if (!any) fail(ErrorKind::validation, "dina: Q row " + std::to_string(i) + " requires no concept");
  }
}

// eta(l, i) = 1 iff profile l covers every concept item i requires.
std::vector<std::vector<std::uint8_t>> eta_table(const Matrix& q) {
  const auto k = static_cast<int>(q.cols());
  const std::uint32_t profiles = 1u << k;
  std::vector<std::uint32_t> required(static_cast<std::size_t>(q.rows()), 0);
  for (Eigen::Index i = 0; i < q.rows(); ++i)
    for (int c = 0; c < k; ++c)
      if (q(i, c) == 1.0) required[static_cast<std::size_t>(i)] |= 1u << c;
  std::vector<std::vector<std::uint8_t>> eta(profiles, std::vector<std::uint8_t>(required.size()));
  for (std::uint32_t l = 0; l < profiles; ++l)
    for (std::size_t i = 0; i < required.size(); ++i) eta[l][i] = (l & required[i]) == required[i] ? 1 : 0;
  return eta;
}

bool lex_less(std::uint32_t a, std::uint32_t b, int k) {
  for (int c = 0; c < k; ++c) {
    const auto ba = (a >> c) & 1u, bb = (b >> c) & 1u;
    if (ba != bb) return ba < bb;
  }
  return false;
}

// MAP under a uniform prior, with the documented tie order.
std::pair<std::uint32_t, bool> choose_map(const std::vector<double>& ll, int k) {
  const double best = *std::max_element(ll.begin(), ll.end());
  const double slack = 1e-12 * std::max(1.0, std::abs(best));
  std::uint32_t pick = 0;
  int ties = 0;
  for (std::uint32_t l = 0; l < ll.size(); ++l) {
    if (ll[l] < best - slack) continue;
    if (ties++ == 0) {
      pick = l;
      continue;
    }
    const int pl = std::popcount(l), pp = std::popcount(pick);
    if (pl < pp || (pl == pp && lex_less(l, pick, k))) pick = l;
  }
  return {pick, ties > 1};
}

std::vector<double> normalize_posterior(const std::vector<double>& ll) {
  const double best = *std::max_element(ll.begin(), ll.end());
  std::vector<double> post(ll.size());
  double z = 0.0;
  for (std::size_t l = 0; l < ll.size(); ++l) z += post[l] = std::exp(ll[l] - best);
  for (auto& p : post) p /= z;
  return post;
}

// Per-item log response probabilities for eta = 0 / 1 and x = 0 / 1.
struct LogTerms {
  double g1, g0, s1, s0;  // log g, log(1-g), log(1-s), log s
};

std::vector<LogTerms> log_terms(const Params& p) {
  std::vector<LogTerms> out(p.slip.size());
  for (std::size_t i = 0; i < out.size(); ++i)
    out[i] = {safe_log(p.guess[i]), safe_log(1.0 - p.guess[i]), safe_log(1.0 - p.slip[i]), safe_log(p.slip[i])};
  return out;
}

std::vector<double> profile_loglik(const Matrix& x, Eigen::Index learner, const std::vector<LogTerms>& lt,
                                   const std::vector<std::vector<std::uint8_t>>& eta) {
  std::vector<double> ll(eta.size(), 0.0);
  for (std::size_t l = 0; l < eta.size(); ++l) {
    double s = 0.0;
    for (std::size_t i = 0; i < lt.size(); ++i) {
      const bool correct = x(static_cast<Eigen::Index>(i), learner) == 1.0;
      if (eta[l][i]) s += correct ? lt[i].s1 : lt[i].s0;
      else s += correct ? lt[i].g1 : lt[i].g0;
    }
    ll[l] = s;
  }
  return ll;
}

double logsumexp(const std::vector<double>& v) {
  const double m = *std::max_element(v.begin(), v.end());
  double s = 0.0;
  for (double x : v) s += std::exp(x - m);
  return m + std::log(s);
}

void check_binary(const Matrix& x, const char* what) {
  if (!((x.array() == 0.0) || (x.array() == 1.0)).all())
    fail(ErrorKind::validation, std::string("dina: ") + what + " must be binary");
}

}  // namespace

Params Params::uniform(std::size_t items, double slip, double guess) {
  return {std::vector<double>(items, slip), std::vector<double>(items, guess)};
}

void Params::validate() const {
  if (slip.size() != guess.size()) fail(ErrorKind::dimension, "dina: slip and guess lengths differ");
  for (std::size_t i = 0; i < slip.size(); ++i) {
    const double s = slip[i], g = guess[i];
    if (!(s >= 0.0 && s < 1.0 && g >= 0.0 && g < 1.0 && s + g < 1.0))
      fail(ErrorKind::invalid_argument, "dina: item " + std::to_string(i) + " needs s,g in [0,1) with s+g < 1");
  }
}

Profile profile_from_index(std::uint32_t index, int concepts) {
  Profile a(static_cast<std::size_t>(concepts));
  for (int k = 0; k < concepts; ++k) a[static_cast<std::size_t>(k)] = (index >> k) & 1u;
  return a;
}

std::uint32_t profile_index(const Profile& alpha) {
  std::uint32_t idx = 0;
  for (std::size_t k = 0; k < alpha.size(); ++k)
    if (alpha[k]) idx |= 1u << k;
  return idx;
}

double response_prob(const Profile& alpha, std::span<const double> q_row, double slip, double guess) {
  if (alpha.size() != q_row.size()) fail(ErrorKind::dimension, "dina: profile and Q row lengths differ");
  bool required_any = false, covered = true;
  for (std::size_t k = 0; k < q_row.size(); ++k) {
    if (q_row[k] == 0.0) continue;
    required_any = true;
    covered = covered && alpha[k] == 1;
  }
  require(required_any, "dina: Q row requires no concept");
  return covered ? 1.0 - slip : guess;
}

Inference infer_profile(std::span<const int> responses, const Matrix& q, const Params& params) {
  check_q(q);
  params.validate();
  if (responses.size() != static_cast<std::size_t>(q.rows()) || params.slip.size() != responses.size())
    fail(ErrorKind::dimension, "dina: responses, Q rows and parameters must all have length M");
  Matrix x(static_cast<Eigen::Index>(responses.size()), 1);
  for (std::size_t i = 0; i < responses.size(); ++i) {
    if (responses[i] != 0 && responses[i] != 1) fail(ErrorKind::validation, "dina: responses must be binary");
    x(static_cast<Eigen::Index>(i), 0) = responses[i];
  }
  const auto k = static_cast<int>(q.cols());
  const auto ll = profile_loglik(x, 0, log_terms(params), eta_table(q));
  Inference inf;
  auto [pick, tie] = choose_map(ll, k);
  inf.map = profile_from_index(pick, k);
  inf.tie = tie;
  inf.posterior = normalize_posterior(ll);
  return inf;
}

double marginal_loglik(const Matrix& x, const Matrix& q, const Params& params) {
  check_q(q);
  const auto eta = eta_table(q);
  const auto lt = log_terms(params);
  const double log_prior = -std::log(static_cast<double>(eta.size()));
  double total = 0.0;
  for (Eigen::Index j = 0; j < x.cols(); ++j) total += log_prior + logsumexp(profile_loglik(x, j, lt, eta));
  return total;
}

FitResult em_fit(const Matrix& x, const Matrix& q, int max_iters, double tol, const Params* init) {
  check_q(q);
  check_binary(x, "responses");
  require(max_iters >= 0, "dina: max_iters must be >= 0");
  require(tol >= 0.0, "dina: tol must be >= 0");
  if (x.rows() != q.rows())
    fail(ErrorKind::dimension, "dina: X has " + std::to_string(x.rows()) + " items, Q has " + std::to_string(q.rows()));
  if (x.cols() < 1) fail(ErrorKind::dimension, "dina: no learners");

  const auto m = static_cast<std::size_t>(x.rows());
  const auto k = static_cast<int>(q.cols());
  const auto eta = eta_table(q);
  const std::size_t profiles = eta.size();
  const double log_prior = -std::log(static_cast<double>(profiles));

  FitResult r;
  r.params = init ? *init : Params::uniform(m, 0.2, 0.2);
  if (r.params.slip.size() != m) fail(ErrorKind::dimension, "dina: initial parameters have the wrong length");
  r.params.validate();

  for (std::size_t i = 0; i < m; ++i) {
    const double sum = x.row(static_cast<Eigen::Index>(i)).sum();
    if (sum == 0.0 || sum == static_cast<double>(x.cols()))
      r.warnings.push_back("dina: item " + std::to_string(i) + " has a constant response; its parameters will be clamped");
  }

  Matrix post(x.cols(), static_cast<Eigen::Index>(profiles));
  auto e_step = [&](const Params& p) {
    const auto lt = log_terms(p);
    double total = 0.0;
    for (Eigen::Index j = 0; j < x.cols(); ++j) {
      const auto ll = profile_loglik(x, j, lt, eta);
      const auto pj = normalize_posterior(ll);
      for (std::size_t l = 0; l < profiles; ++l) post(j, static_cast<Eigen::Index>(l)) = pj[l];
      total += log_prior + logsumexp(ll);
    }
    return total;
  };

  std::set<std::size_t> clamp_warned;
  auto m_step = [&](const Params& old) {
    Params next = old;
    for (std::size_t i = 0; i < m; ++i) {
      double n1 = 0.0, r1 = 0.0, n0 = 0.0, r0 = 0.0;
      const auto ii = static_cast<Eigen::Index>(i);
      for (Eigen::Index j = 0; j < x.cols(); ++j) {
        double w1 = 0.0, w0 = 0.0;
        for (std::size_t l = 0; l < profiles; ++l) (eta[l][i] ? w1 : w0) += post(j, static_cast<Eigen::Index>(l));
        n1 += w1;
        n0 += w0;
        r1 += w1 * x(ii, j);
        r0 += w0 * x(ii, j);
      }
      double s = n1 > 0.0 ? 1.0 - r1 / n1 : old.slip[i];
      double g = n0 > 0.0 ? r0 / n0 : old.guess[i];
      const double s_raw = s, g_raw = g;
      s = std::clamp(s, kParamFloor, kMaxSum - kParamFloor);
      g = std::clamp(g, kParamFloor, kMaxSum - kParamFloor);
      if (s + g > kMaxSum) (s >= g ? s : g) = kMaxSum - std::min(s, g);
      if ((s != s_raw || g != g_raw) && clamp_warned.insert(i).second)
        r.warnings.push_back("dina: clamp engaged for item " + std::to_string(i));

      // Expected complete-data log-likelihood of this item's parameters.
      auto q_item = [&](double sv, double gv) {
        return r1 * safe_log(1.0 - sv) + (n1 - r1) * safe_log(sv) + r0 * safe_log(gv) + (n0 - r0) * safe_log(1.0 - gv);
      };
      if (q_item(s, g) >= q_item(old.slip[i], old.guess[i])) {
        next.slip[i] = s;
        next.guess[i] = g;
      }
    }
    return next;
  };

  r.loglik_trace.push_back(e_step(r.params));
  for (int it = 1; it <= max_iters; ++it) {
    r.params = m_step(r.params);
    const double ll = e_step(r.params);
    const double gain = ll - r.loglik_trace.back();
    r.loglik_trace.push_back(ll);
    r.iterations_run = it;
    if (gain < tol) {
      r.converged = true;
      break;
    }
  }

  r.posteriors = post;
  const auto lt = log_terms(r.params);
  for (Eigen::Index j = 0; j < x.cols(); ++j)
    r.map_profiles.push_back(profile_from_index(choose_map(profile_loglik(x, j, lt, eta), k).first, k));
  return r;
}

Simulation simulate(const Matrix& q, const Params& params, int learners, std::uint64_t seed, double mastery_rate) {
  check_q(q);
  params.validate();
  require(learners >= 1, "dina: learners must be >= 1");
  require(mastery_rate >= 0.0 && mastery_rate <= 1.0, "dina: mastery_rate must lie in [0,1]");
  if (params.slip.size() != static_cast<std::size_t>(q.rows()))
    fail(ErrorKind::dimension, "dina: parameters do not match Q rows");
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const auto k = static_cast<std::size_t>(q.cols());
  Simulation sim;
  sim.x.resize(q.rows(), learners);
  for (int j = 0; j < learners; ++j) {
    Profile alpha(k);
    for (auto& a : alpha) a = unit(rng) < mastery_rate ? 1 : 0;
    for (Eigen::Index i = 0; i < q.rows(); ++i) {
      const Vector row = q.row(i).transpose();
      const double p = response_prob(alpha, as_span(row),
                                     params.slip[static_cast<std::size_t>(i)], params.guess[static_cast<std::size_t>(i)]);
      sim.x(i, j) = unit(rng) < p ? 1.0 : 0.0;
    }
    sim.profiles.push_back(std::move(alpha));
  }
  return sim;
}

Matrix binarize_scores(const Matrix& x) { return (x.array() >= 0.5).cast<double>().matrix(); }

std::string to_json(const FitResult& r, const std::vector<std::string>& item_ids,
                    const std::vector<std::string>& learner_ids, const std::vector<std::string>& concept_ids) {
  using nlohmann::json;
  if (item_ids.size() != r.params.slip.size() || learner_ids.size() != r.map_profiles.size())
    fail(ErrorKind::dimension, "dina json: ids do not match the fit");
  json items = json::array();
  for (std::size_t i = 0; i < item_ids.size(); ++i)
    items.push_back({{"item_id", item_ids[i]}, {"slip", r.params.slip[i]}, {"guess", r.params.guess[i]}});
  json learners = json::array();
  for (std::size_t j = 0; j < learner_ids.size(); ++j) {
    json post = json::array();
    for (Eigen::Index l = 0; l < r.posteriors.cols(); ++l) post.push_back(r.posteriors(static_cast<Eigen::Index>(j), l));
    learners.push_back({{"model_id", learner_ids[j]}, {"map_profile", r.map_profiles[j]}, {"posterior", post}});
  }
  return json{{"format_version", 1},
              {"concept_ids", concept_ids},
              {"profile_bit_order", "bit k of the posterior index is concept k"},
              {"iterations_run", r.iterations_run},
              {"converged", r.converged},
              {"loglik_trace", r.loglik_trace},
              {"items", items},
              {"models", learners},
              {"warnings", r.warnings}}
             .dump(2) +
         "\n";
}

}  // namespace cdm::dina
