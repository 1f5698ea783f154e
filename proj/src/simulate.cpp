#include "cdmkit/simulate.hpp"

#include <cmath>
#include <random>

#include <json.hpp>

#include "cdmkit/metrics.hpp"

namespace cdm {

using nlohmann::json;

void SimConfig::validate() const {
  require(items >= 1 && models >= 1 && concepts >= 1 && latent_dim >= 1, "simulate: all dimensions must be >= 1");
  for (const auto* g : {&prior_e, &prior_u, &prior_v})
    require(std::isfinite(g->shape) && g->shape > 0.0 && std::isfinite(g->rate) && g->rate > 0.0,
            "simulate: gamma shape and rate must be > 0");
  require(q_threshold > 0.0 && q_threshold < 1.0, "simulate: q_threshold must lie in (0,1)");
  require(repeats >= 1, "simulate: repeats must be >= 1");
}

double sigmoid(double z) {
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

SimOutput simulate(const SimConfig& cfg) {
  cfg.validate();
  const Eigen::Index m = cfg.items, n = cfg.models, k = cfg.concepts, t = cfg.latent_dim;
  std::mt19937_64 rng(cfg.seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);

  auto gamma_fill = [&](Matrix& out, const GammaPrior& prior) {
    std::gamma_distribution<double> g(prior.shape, 1.0 / prior.rate);
    for (Eigen::Index r = 0; r < out.rows(); ++r)
      for (Eigen::Index c = 0; c < out.cols(); ++c) out(r, c) = g(rng);
  };

  SimOutput out;
  out.truth.U.resize(t, n);
  out.truth.V.resize(t, k);
  out.truth.E.resize(m, t);
  gamma_fill(out.truth.U, cfg.prior_u);
  gamma_fill(out.truth.V, cfg.prior_v);

  out.Q = Matrix::Zero(m, k);
  std::gamma_distribution<double> gamma_e(cfg.prior_e.shape, 1.0 / cfg.prior_e.rate);
  constexpr int kMaxRedraws = 1000;
  for (Eigen::Index i = 0; i < m; ++i) {
    bool tagged = false;
    for (int attempt = 0; attempt <= kMaxRedraws && !tagged; ++attempt) {
      for (Eigen::Index c = 0; c < t; ++c) out.truth.E(i, c) = gamma_e(rng);
      for (Eigen::Index c = 0; c < k; ++c) {
        const double p = sigmoid(out.truth.E.row(i).dot(out.truth.V.col(c)));
        const bool on = cfg.q_mode == QMode::threshold ? p >= cfg.q_threshold : unit(rng) < p;
        out.Q(i, c) = on ? 1.0 : 0.0;
        tagged = tagged || on;
      }
    }
    if (!tagged)
      fail(ErrorKind::numeric, "simulate: item " + std::to_string(i) + " tagged no concept after " +
                                   std::to_string(kMaxRedraws) + " redraws; lower q_threshold");
  }

  out.p_response = (out.truth.E * out.truth.U).unaryExpr([](double z) { return sigmoid(z); });
  out.p_mastery = (out.truth.U.transpose() * out.truth.V).unaryExpr([](double z) { return sigmoid(z); });

  out.X.resize(m, n);
  const int draws = cfg.response_mode == ResponseMode::mean ? cfg.repeats : 1;
  for (Eigen::Index i = 0; i < m; ++i)
    for (Eigen::Index j = 0; j < n; ++j) {
      int hits = 0;
      for (int r = 0; r < draws; ++r) hits += unit(rng) < out.p_response(i, j) ? 1 : 0;
      out.X(i, j) = static_cast<double>(hits) / draws;
    }
  out.W = Matrix::Ones(m, n);

  out.item_ids = sequential_ids("q", static_cast<std::size_t>(m));
  out.model_ids = sequential_ids("m", static_cast<std::size_t>(n));
  out.concept_ids = sequential_ids("c", static_cast<std::size_t>(k));
  return out;
}

RecoveryScore recovery_score(const Matrix& fitted, const Matrix& planted) {
  if (fitted.rows() != planted.rows() || fitted.cols() != planted.cols())
    fail(ErrorKind::dimension, "recovery_score: fitted is " + std::to_string(fitted.rows()) + "x" +
                                   std::to_string(fitted.cols()) + ", planted is " + std::to_string(planted.rows()) +
                                   "x" + std::to_string(planted.cols()));
  RecoveryScore s;
  double sum = 0.0;
  int defined = 0;
  for (Eigen::Index j = 0; j < fitted.rows(); ++j) {
    const Vector a = fitted.row(j).transpose(), b = planted.row(j).transpose();
    auto rho = spearman(as_span(a), as_span(b));
    if (!rho) s.warnings.push_back("recovery_score: model row " + std::to_string(j) + " is constant, excluded");
    else {
      sum += *rho;
      ++defined;
    }
    s.per_model.push_back(rho);
  }
  if (defined > 0) s.overall = sum / defined;
  return s;
}

ItemBank stub_item_bank(const SimOutput& out) {
  std::vector<Concept> concepts;
  for (const auto& id : out.concept_ids) concepts.push_back({id, "synthetic concept " + id});
  std::vector<Item> items;
  for (Eigen::Index i = 0; i < out.Q.rows(); ++i) {
    Item it{out.item_ids[static_cast<std::size_t>(i)], "synthetic item", "A", {}};
    for (Eigen::Index k = 0; k < out.Q.cols(); ++k)
      if (out.Q(i, k) != 0.0) it.concept_tags.push_back(out.concept_ids[static_cast<std::size_t>(k)]);
    items.push_back(std::move(it));
  }
  return ItemBank(ConceptCatalog(std::move(concepts)), std::move(items));
}

namespace {

json rows_json(const Matrix& mat) {
  json rows = json::array();
  for (Eigen::Index i = 0; i < mat.rows(); ++i) {
    json row = json::array();
    for (Eigen::Index j = 0; j < mat.cols(); ++j) row.push_back(mat(i, j));
    rows.push_back(std::move(row));
  }
  return rows;
}

Matrix rows_matrix(const json& j, const std::string& where) {
  if (!j.is_array() || j.empty() || !j[0].is_array()) fail(ErrorKind::parse, where + ": expected a nested array");
  Matrix mat(static_cast<Eigen::Index>(j.size()), static_cast<Eigen::Index>(j[0].size()));
  for (std::size_t r = 0; r < j.size(); ++r) {
    if (!j[r].is_array() || j[r].size() != j[0].size()) fail(ErrorKind::parse, where + ": ragged rows");
    for (std::size_t c = 0; c < j[r].size(); ++c)
      mat(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = j[r][c].get<double>();
  }
  return mat;
}

json prior_json(const GammaPrior& g) { return {{"shape", g.shape}, {"rate", g.rate}}; }

}  // namespace

void save_simulation(const std::filesystem::path& dir, const SimOutput& out, const SimConfig& cfg) {
  std::filesystem::create_directories(dir);
  save_item_bank_json(dir / "bank.json", stub_item_bank(out));
  write_matrix_csv(dir / "X.csv", {"item_id", out.item_ids, out.model_ids, out.X});
  write_matrix_csv(dir / "W.csv", {"item_id", out.item_ids, out.model_ids, out.W});
  write_matrix_csv(dir / "Q.csv", {"item_id", out.item_ids, out.concept_ids, out.Q});

  json doc;
  doc["format_version"] = kFormatVersion;
  doc["config"] = {{"items", cfg.items},
                   {"models", cfg.models},
                   {"concepts", cfg.concepts},
                   {"latent_dim", cfg.latent_dim},
                   {"prior_e", prior_json(cfg.prior_e)},
                   {"prior_u", prior_json(cfg.prior_u)},
                   {"prior_v", prior_json(cfg.prior_v)},
                   {"seed", cfg.seed},
                   {"q_threshold", cfg.q_threshold},
                   {"q_mode", cfg.q_mode == QMode::threshold ? "threshold" : "sampled"},
                   {"response_mode", cfg.response_mode == ResponseMode::mean ? "mean" : "bernoulli"},
                   {"repeats", cfg.repeats}};
  doc["item_ids"] = out.item_ids;
  doc["model_ids"] = out.model_ids;
  doc["concept_ids"] = out.concept_ids;
  doc["E"] = rows_json(out.truth.E);
  doc["U"] = rows_json(out.truth.U);
  doc["V"] = rows_json(out.truth.V);
  doc["p_response"] = rows_json(out.p_response);
  doc["p_mastery"] = rows_json(out.p_mastery);
  write_text_file(dir / "truth.json", doc.dump(2) + "\n");
}

SimOutput load_truth(const std::filesystem::path& path) {
  const auto where = path.string();
  json doc;
  try {
    doc = json::parse(read_text_file(path));
  } catch (const json::parse_error& e) {
    fail(ErrorKind::parse, where + ": " + e.what());
  }
  if (!doc.is_object() || !doc.contains("format_version")) fail(ErrorKind::parse, where + ": missing format_version");
  if (doc["format_version"] != kFormatVersion) fail(ErrorKind::unsupported, where + ": unsupported format_version");
  SimOutput out;
  try {
    out.item_ids = doc.at("item_ids").get<std::vector<std::string>>();
    out.model_ids = doc.at("model_ids").get<std::vector<std::string>>();
    out.concept_ids = doc.at("concept_ids").get<std::vector<std::string>>();
    out.truth.E = rows_matrix(doc.at("E"), where + ": E");
    out.truth.U = rows_matrix(doc.at("U"), where + ": U");
    out.truth.V = rows_matrix(doc.at("V"), where + ": V");
    out.p_response = rows_matrix(doc.at("p_response"), where + ": p_response");
    out.p_mastery = rows_matrix(doc.at("p_mastery"), where + ": p_mastery");
  } catch (const json::exception& e) {
    fail(ErrorKind::parse, where + ": " + e.what());
  }
  if (out.p_mastery.rows() != static_cast<Eigen::Index>(out.model_ids.size()) ||
      out.p_mastery.cols() != static_cast<Eigen::Index>(out.concept_ids.size()))
    fail(ErrorKind::parse, where + ": p_mastery shape does not match ids");
  return out;
}

}  // namespace cdm
