#include "cdmkit/mcf.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <random>

#include <json.hpp>

#include "cdmkit/data_model.hpp"

namespace cdm {

using nlohmann::json;

void McfConfig::validate() const {
  auto positive = [](double v) { return std::isfinite(v) && v > 0.0; };
  auto non_negative = [](double v) { return std::isfinite(v) && v >= 0.0; };
  require(latent_dim >= 1, "mcf: latent_dim (T) must be >= 1");
  require(non_negative(beta), "mcf: beta must be >= 0");
  require(non_negative(lambda_e), "mcf: lambda_e must be >= 0");
  require(non_negative(lambda_u), "mcf: lambda_u must be >= 0");
  require(non_negative(lambda_v), "mcf: lambda_v must be >= 0");
  require(max_iters >= 0, "mcf: max_iters must be >= 0");
  require(positive(tol), "mcf: tol must be > 0");
  require(positive(epsilon), "mcf: epsilon must be > 0");
  for (const auto* g : {&prior_e, &prior_u, &prior_v})
    require(positive(g->shape) && positive(g->rate), "mcf: gamma prior shape and rate must be > 0");
}

namespace {

std::string shape(const Matrix& m) { return std::to_string(m.rows()) + "x" + std::to_string(m.cols()); }

void check_problem(const McfProblem& p) {
  if (p.W.rows() != p.X.rows() || p.W.cols() != p.X.cols())
    fail(ErrorKind::dimension, "mcf: W is " + shape(p.W) + " but X is " + shape(p.X));
  if (p.Q.rows() != p.X.rows())
    fail(ErrorKind::dimension, "mcf: Q is " + shape(p.Q) + " but X has " + std::to_string(p.X.rows()) + " rows");
  if (p.X.size() == 0 || p.Q.cols() == 0) fail(ErrorKind::dimension, "mcf: empty input matrix");
}

void check_factors(const FactorSet& f, const McfProblem& p) {
  check_problem(p);
  const auto t = f.E.cols();
  if (f.E.rows() != p.X.rows() || f.U.rows() != t || f.U.cols() != p.X.cols() || f.V.rows() != t ||
      f.V.cols() != p.Q.cols())
    fail(ErrorKind::dimension, "mcf: factors E " + shape(f.E) + ", U " + shape(f.U) + ", V " + shape(f.V) +
                                   " do not fit X " + shape(p.X) + " and Q " + shape(p.Q));
}

void check_inputs(const McfProblem& p) {
  check_problem(p);
  auto in_unit = [](const Matrix& m) { return (m.array() >= 0.0).all() && (m.array() <= 1.0).all(); };
  if (!in_unit(p.X)) fail(ErrorKind::validation, "mcf: X entries must lie in [0,1]");
  if (!in_unit(p.W)) fail(ErrorKind::validation, "mcf: W entries must lie in [0,1]");
  if (!((p.Q.array() == 0.0) || (p.Q.array() == 1.0)).all())
    fail(ErrorKind::validation, "mcf: Q must be binary");
  if ((p.W.array() == 0.0).all()) fail(ErrorKind::invalid_argument, "mcf: W is all zero, nothing is observed");
}

bool valid_factor(const Matrix& m) { return m.allFinite() && (m.array() >= 0.0).all(); }

}  // namespace

double objective(const FactorSet& f, const McfProblem& p, const McfConfig& cfg) {
  check_factors(f, p);
  const double fit_x = (p.W.array() * (p.X - f.E * f.U).array()).square().sum();
  const double fit_q = (p.Q - f.E * f.V).squaredNorm();
  return fit_x + cfg.beta * fit_q + cfg.lambda_e * f.E.squaredNorm() + cfg.lambda_u * f.U.squaredNorm() +
         cfg.lambda_v * f.V.squaredNorm();
}

FactorSet objective_gradient(const FactorSet& f, const McfProblem& p, const McfConfig& cfg) {
  check_factors(f, p);
  const Matrix weighted_residual = (p.W.array().square() * (p.X - f.E * f.U).array()).matrix();
  const Matrix q_residual = p.Q - f.E * f.V;
  FactorSet g;
  g.E = -2.0 * weighted_residual * f.U.transpose() - 2.0 * cfg.beta * q_residual * f.V.transpose() +
        2.0 * cfg.lambda_e * f.E;
  g.U = -2.0 * f.E.transpose() * weighted_residual + 2.0 * cfg.lambda_u * f.U;
  g.V = -2.0 * cfg.beta * f.E.transpose() * q_residual + 2.0 * cfg.lambda_v * f.V;
  return g;
}

FactorSet initial_factors(Eigen::Index m, Eigen::Index n, Eigen::Index k, const McfConfig& cfg) {
  cfg.validate();
  std::mt19937_64 rng(cfg.seed);
  const auto t = static_cast<Eigen::Index>(cfg.latent_dim);

  auto fill = [&](Eigen::Index rows, Eigen::Index cols, const GammaPrior& prior) {
    Matrix out(rows, cols);
    std::gamma_distribution<double> gamma(prior.shape, 1.0 / prior.rate);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    for (Eigen::Index r = 0; r < rows; ++r)
      for (Eigen::Index c = 0; c < cols; ++c)
        out(r, c) = cfg.init == InitMode::gamma_prior ? gamma(rng) : 1.0 - unit(rng);  // (0,1]
    return out;
  };
  FactorSet f;
  f.E = fill(m, t, cfg.prior_e);
  f.U = fill(t, n, cfg.prior_u);
  f.V = fill(t, k, cfg.prior_v);
  return f;
}

namespace {

// W o W o X is loop-invariant; the rest is recomputed per step.
void step_with(FactorSet& f, const McfProblem& p, const Matrix& w2, const Matrix& w2x, const McfConfig& cfg) {
  const double eps = cfg.epsilon;
  {
    const Matrix w2_eu = (w2.array() * (f.E * f.U).array()).matrix();
    const Matrix numer = w2x * f.U.transpose() + cfg.beta * p.Q * f.V.transpose();
    const Matrix denom =
        w2_eu * f.U.transpose() + cfg.beta * f.E * (f.V * f.V.transpose()) + cfg.lambda_e * f.E;
    f.E.array() *= numer.array() / (denom.array() + eps);
  }
  {
    const Matrix w2_eu = (w2.array() * (f.E * f.U).array()).matrix();
    const Matrix numer = f.E.transpose() * w2x;
    const Matrix denom = f.E.transpose() * w2_eu + cfg.lambda_u * f.U;
    f.U.array() *= numer.array() / (denom.array() + eps);
  }
  {
    const Matrix numer = cfg.beta * (f.E.transpose() * p.Q);
    const Matrix denom = cfg.beta * ((f.E.transpose() * f.E) * f.V) + cfg.lambda_v * f.V;
    f.V.array() *= numer.array() / (denom.array() + eps);
  }
}

}  // namespace

void multiplicative_step(FactorSet& f, const McfProblem& p, const McfConfig& cfg) {
  check_factors(f, p);
  const Matrix w2 = p.W.array().square().matrix();
  const Matrix w2x = (w2.array() * p.X.array()).matrix();
  step_with(f, p, w2, w2x, cfg);
}

FitResult fit(const McfProblem& p, const McfConfig& cfg) {
  cfg.validate();
  check_inputs(p);

  FitResult r;
  r.seed = cfg.seed;
  r.factors = initial_factors(p.X.rows(), p.X.cols(), p.Q.cols(), cfg);
  r.objective_trace.push_back(objective(r.factors, p, cfg));

  const Matrix w2 = p.W.array().square().matrix();
  const Matrix w2x = (w2.array() * p.X.array()).matrix();

  for (int it = 1; it <= cfg.max_iters; ++it) {
    step_with(r.factors, p, w2, w2x, cfg);
    if (!valid_factor(r.factors.E) || !valid_factor(r.factors.U) || !valid_factor(r.factors.V))
      fail(ErrorKind::numeric, "mcf: non-finite or negative factor entry at iteration " + std::to_string(it) +
                                   " (seed " + std::to_string(cfg.seed) + ")");
    const double prev = r.objective_trace.back();
    const double cur = objective(r.factors, p, cfg);
    if (!std::isfinite(cur))
      fail(ErrorKind::numeric, "mcf: objective became non-finite at iteration " + std::to_string(it));
    r.objective_trace.push_back(cur);
    r.iterations_run = it;
    const double rel = prev > 0.0 ? (prev - cur) / prev : 0.0;
    if (rel < cfg.tol) {
      r.converged = true;
      break;
    }
  }
  return r;
}

FitResult multistart_fit(const McfProblem& p, const McfConfig& cfg, int starts) {
  require(starts >= 1, "mcf: multistart needs at least one start");
  std::optional<FitResult> best;
  std::optional<Error> first_error;
  for (int s = 0; s < starts; ++s) {
    McfConfig c = cfg;
    c.seed = cfg.seed + static_cast<std::uint64_t>(s);
    try {
      FitResult r = fit(p, c);
      // Strict < keeps the lowest seed among equal objectives.
      if (!best || r.final_objective() < best->final_objective()) best = std::move(r);
    } catch (const Error& e) {
      // Input errors fail the same way for every seed.
      if (e.kind() != ErrorKind::numeric) throw;
      if (!first_error) first_error = e;
    }
  }
  if (!best) throw *first_error;
  return std::move(*best);
}

Prediction predict_scores(const FactorSet& f) {
  Prediction out;
  out.scores = f.E * f.U;
  for (Eigen::Index i = 0; i < out.scores.size(); ++i) {
    double& v = out.scores.data()[i];
    if (v < 0.0) {
      v = 0.0;
      ++out.clipped_low;
    } else if (v > 1.0) {
      v = 1.0;
      ++out.clipped_high;
    }
  }
  return out;
}

std::string to_string(Normalization n) {
  switch (n) {
    case Normalization::clip: return "clip";
    case Normalization::minmax_global: return "minmax_global";
    case Normalization::minmax_per_concept: return "minmax_per_concept";
  }
  return "clip";
}

Normalization parse_normalization(const std::string& tag) {
  if (tag == "clip") return Normalization::clip;
  if (tag == "minmax_global") return Normalization::minmax_global;
  if (tag == "minmax_per_concept") return Normalization::minmax_per_concept;
  fail(ErrorKind::parse, "unknown normalization \"" + tag + "\"");
}

MasteryMatrix normalize_mastery(const Matrix& raw, Normalization mode) {
  MasteryMatrix m;
  m.raw = raw;
  m.normalization = mode;
  switch (mode) {
    case Normalization::clip:
      m.prob = raw.cwiseMax(0.0).cwiseMin(1.0);
      break;
    case Normalization::minmax_global: {
      const double lo = raw.minCoeff(), hi = raw.maxCoeff();
      if (hi > lo) {
        m.prob = (raw.array() - lo) / (hi - lo);
      } else {
        m.prob = Matrix::Zero(raw.rows(), raw.cols());
        m.warnings.push_back("mastery: F is constant, minmax_global maps every entry to 0");
      }
      break;
    }
    case Normalization::minmax_per_concept: {
      m.prob = Matrix::Zero(raw.rows(), raw.cols());
      for (Eigen::Index k = 0; k < raw.cols(); ++k) {
        const double lo = raw.col(k).minCoeff(), hi = raw.col(k).maxCoeff();
        if (hi > lo)
          m.prob.col(k) = (raw.col(k).array() - lo) / (hi - lo);
        else
          m.warnings.push_back("mastery: concept column " + std::to_string(k) +
                               " is constant, minmax_per_concept maps it to 0");
      }
      break;
    }
  }
  return m;
}

MasteryMatrix mastery(const FactorSet& f, Normalization mode) {
  if (f.U.rows() != f.V.rows())
    fail(ErrorKind::dimension, "mastery: U is " + shape(f.U) + " but V is " + shape(f.V));
  return normalize_mastery(f.U.transpose() * f.V, mode);
}

// ---------------------------------------------------------------------------

namespace {

json to_json(const Matrix& m) {
  json rows = json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    json row = json::array();
    for (Eigen::Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
    rows.push_back(std::move(row));
  }
  return rows;
}

Matrix matrix_from_json(const json& j, std::size_t rows, std::size_t cols, const std::string& where) {
  if (!j.is_array() || j.size() != rows) fail(ErrorKind::parse, where + ": expected " + std::to_string(rows) + " rows");
  Matrix m(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
  for (std::size_t i = 0; i < rows; ++i) {
    if (!j[i].is_array() || j[i].size() != cols)
      fail(ErrorKind::parse, where + ": row " + std::to_string(i) + " must have " + std::to_string(cols) + " values");
    for (std::size_t c = 0; c < cols; ++c) {
      if (!j[i][c].is_number()) fail(ErrorKind::parse, where + ": non-numeric entry");
      m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(c)) = j[i][c].get<double>();
    }
  }
  return m;
}

json config_json(const McfConfig& c) {
  auto prior = [](const GammaPrior& g) { return json{{"shape", g.shape}, {"rate", g.rate}}; };
  return {{"latent_dim", c.latent_dim},
          {"beta", c.beta},
          {"lambda_e", c.lambda_e},
          {"lambda_u", c.lambda_u},
          {"lambda_v", c.lambda_v},
          {"max_iters", c.max_iters},
          {"tol", c.tol},
          {"epsilon", c.epsilon},
          {"seed", c.seed},
          {"init", c.init == InitMode::gamma_prior ? "gamma_prior" : "uniform"},
          {"prior_e", prior(c.prior_e)},
          {"prior_u", prior(c.prior_u)},
          {"prior_v", prior(c.prior_v)}};
}

}  // namespace

void save_fit(const std::filesystem::path& dir, const FitResult& r, const McfConfig& cfg, const FitIds& ids) {
  const auto& f = r.factors;
  const auto skills = sequential_ids("skill", static_cast<std::size_t>(f.latent_dim()));
  if (ids.items.size() != static_cast<std::size_t>(f.E.rows()) ||
      ids.models.size() != static_cast<std::size_t>(f.U.cols()) ||
      ids.concepts.size() != static_cast<std::size_t>(f.V.cols()))
    fail(ErrorKind::dimension, "save_fit: ids do not match factor shapes");
  std::filesystem::create_directories(dir);
  write_matrix_csv(dir / "E.csv", {"item_id", ids.items, skills, f.E});
  write_matrix_csv(dir / "U.csv", {"skill", skills, ids.models, f.U});
  write_matrix_csv(dir / "V.csv", {"skill", skills, ids.concepts, f.V});

  std::string trace = "iteration,objective\n";
  for (std::size_t t = 0; t < r.objective_trace.size(); ++t)
    trace += std::to_string(t) + "," + format_double(r.objective_trace[t]) + "\n";
  write_text_file(dir / "trace.csv", trace);

  const auto pred = predict_scores(f);
  json doc;
  doc["format_version"] = kFormatVersion;
  doc["config"] = config_json(cfg);
  doc["seed"] = r.seed;
  doc["iterations_run"] = r.iterations_run;
  doc["converged"] = r.converged;
  doc["final_objective"] = r.final_objective();
  doc["objective_trace"] = r.objective_trace;
  doc["prediction_clipping"] = {{"below_zero", pred.clipped_low}, {"above_one", pred.clipped_high}};
  doc["item_ids"] = ids.items;
  doc["model_ids"] = ids.models;
  doc["concept_ids"] = ids.concepts;
  doc["factors"] = {{"E", to_json(f.E)}, {"U", to_json(f.U)}, {"V", to_json(f.V)}};
  write_text_file(dir / "fit.json", doc.dump(2) + "\n");
}

void save_mastery(const std::filesystem::path& dir, const LabeledMastery& m) {
  const auto& mm = m.mastery;
  if (m.model_ids.size() != static_cast<std::size_t>(mm.raw.rows()) ||
      m.concept_ids.size() != static_cast<std::size_t>(mm.raw.cols()))
    fail(ErrorKind::dimension, "save_mastery: ids do not match the mastery shape");
  std::filesystem::create_directories(dir);
  write_matrix_csv(dir / "F_raw.csv", {"model_id", m.model_ids, m.concept_ids, mm.raw});
  write_matrix_csv(dir / "F_prob.csv", {"model_id", m.model_ids, m.concept_ids, mm.prob});
  json doc;
  doc["format_version"] = kFormatVersion;
  doc["normalization"] = to_string(mm.normalization);
  doc["model_ids"] = m.model_ids;
  doc["concept_ids"] = m.concept_ids;
  doc["F_raw"] = to_json(mm.raw);
  doc["F_prob"] = to_json(mm.prob);
  write_text_file(dir / "mastery.json", doc.dump(2) + "\n");
}

LabeledMastery load_mastery(const std::filesystem::path& path) {
  const auto where = path.string();
  json doc;
  try {
    doc = json::parse(read_text_file(path));
  } catch (const json::parse_error& e) {
    fail(ErrorKind::parse, where + ": " + e.what());
  }
  if (!doc.is_object()) fail(ErrorKind::parse, where + ": top level must be an object");
  auto it = doc.find("format_version");
  if (it == doc.end() || !it->is_number_integer()) fail(ErrorKind::parse, where + ": missing format_version");
  if (it->get<int>() != kFormatVersion)
    fail(ErrorKind::unsupported, where + ": unsupported format_version " + std::to_string(it->get<int>()));
  for (const char* key : {"normalization", "model_ids", "concept_ids", "F_raw", "F_prob"})
    if (!doc.contains(key)) fail(ErrorKind::parse, where + ": missing \"" + std::string(key) + "\"");
  if (!doc["normalization"].is_string()) fail(ErrorKind::parse, where + ": normalization must be a string");

  LabeledMastery m;
  try {
    m.model_ids = doc["model_ids"].get<std::vector<std::string>>();
    m.concept_ids = doc["concept_ids"].get<std::vector<std::string>>();
  } catch (const json::exception&) {
    fail(ErrorKind::parse, where + ": ids must be string arrays");
  }
  try {
    m.mastery.normalization = parse_normalization(doc["normalization"].get<std::string>());
  } catch (const Error& e) {
    fail(ErrorKind::parse, where + ": " + e.what());
  }
  m.mastery.raw = matrix_from_json(doc["F_raw"], m.model_ids.size(), m.concept_ids.size(), where + ": F_raw");
  m.mastery.prob = matrix_from_json(doc["F_prob"], m.model_ids.size(), m.concept_ids.size(), where + ": F_prob");
  if (!((m.mastery.prob.array() >= 0.0) && (m.mastery.prob.array() <= 1.0)).all())
    fail(ErrorKind::validation, where + ": F_prob entries must lie in [0,1]");
  return m;
}

}  // namespace cdm
