#include "cdmkit/cdmkit.h"

#include <cmath>
#include <exception>
#include <limits>
#include <memory>
#include <mutex>
#include <new>
#include <string>

#include "cdmkit/data_model.hpp"
#include "cdmkit/dina.hpp"
#include "cdmkit/mcf.hpp"
#include "cdmkit/metrics.hpp"
#include "cdmkit/report.hpp"
#include "cdmkit/simulate.hpp"

struct cdm_matrix {
  cdm::LabeledMatrix m;
};

struct cdm_item_bank {
  cdm::ItemBank bank;
};

struct cdm_sim_output {
  cdm::SimOutput sim;
  cdm::SimConfig cfg;
};

struct cdm_fit_result {
  cdm::FitResult result;
  cdm::McfConfig cfg;
  cdm::FitIds ids;
};

struct cdm_mastery {
  cdm::LabeledMastery m;
};

struct cdm_concept_report {
  cdm::ConceptCountReport report;
};

struct cdm_clustering {
  cdm::ClusterResult result;
  std::vector<std::string> model_ids;
};

struct cdm_dina_result {
  cdm::dina::FitResult fit;
  std::vector<std::string> item_ids, model_ids, concept_ids;
};

struct cdm_manifest {
  cdm::RunManifest manifest;
};

namespace {

thread_local std::string g_last_error;

std::mutex g_warn_mutex;
cdm_warning_fn g_warn_fn = nullptr;
void* g_warn_user = nullptr;

void emit(const cdm::Warnings& warnings) {
  std::lock_guard lock(g_warn_mutex);
  if (!g_warn_fn) return;
  for (const auto& w : warnings) g_warn_fn(w.c_str(), g_warn_user);
}

cdm_status status_of(cdm::ErrorKind kind) {
  switch (kind) {
    case cdm::ErrorKind::invalid_argument: return CDM_ERR_INVALID_ARGUMENT;
    case cdm::ErrorKind::io: return CDM_ERR_IO;
    case cdm::ErrorKind::parse: return CDM_ERR_PARSE;
    case cdm::ErrorKind::validation: return CDM_ERR_VALIDATION;
    case cdm::ErrorKind::dimension: return CDM_ERR_DIMENSION;
    case cdm::ErrorKind::numeric: return CDM_ERR_NUMERIC;
    case cdm::ErrorKind::unsupported: return CDM_ERR_UNSUPPORTED;
  }
  return CDM_ERR_INTERNAL;
}

// Runs `body`, mapping exceptions to status codes and the thread-local message.
template <class F>
cdm_status guarded(F&& body) {
  try {
    body();
    return CDM_OK;
  } catch (const cdm::Error& e) {
    g_last_error = e.what();
    return status_of(e.kind());
  } catch (const std::filesystem::filesystem_error& e) {
    g_last_error = e.what();
    return CDM_ERR_IO;
  } catch (const std::bad_alloc&) {
    g_last_error = "out of memory";
    return CDM_ERR_INTERNAL;
  } catch (const std::exception& e) {
    g_last_error = e.what();
    return CDM_ERR_INTERNAL;
  } catch (...) {
    g_last_error = "unknown error";
    return CDM_ERR_INTERNAL;
  }
}

template <class T>
void need(const T* p, const char* what) {
  if (!p) cdm::fail(cdm::ErrorKind::invalid_argument, std::string(what) + " is NULL");
}

cdm_matrix* wrap(cdm::LabeledMatrix m) { return new cdm_matrix{std::move(m)}; }

cdm::GradingRule rule_of(cdm_grading_rule r) {
  if (r == CDM_GRADE_EXACT) return cdm::GradingRule::exact_match();
  if (r == CDM_GRADE_CHOICE_LETTER) return cdm::GradingRule::choice_letter();
  cdm::fail(cdm::ErrorKind::invalid_argument, "unknown grading rule");
}

cdm::Normalization norm_of(cdm_normalization n) {
  switch (n) {
    case CDM_NORM_CLIP: return cdm::Normalization::clip;
    case CDM_NORM_MINMAX_GLOBAL: return cdm::Normalization::minmax_global;
    case CDM_NORM_MINMAX_PER_CONCEPT: return cdm::Normalization::minmax_per_concept;
  }
  cdm::fail(cdm::ErrorKind::invalid_argument, "unknown normalization");
}

cdm::McfConfig mcf_of(const cdm_mcf_config& c) {
  cdm::McfConfig m;
  m.latent_dim = c.latent_dim;
  m.beta = c.beta;
  m.lambda_e = c.lambda_e;
  m.lambda_u = c.lambda_u;
  m.lambda_v = c.lambda_v;
  m.max_iters = c.max_iters;
  m.tol = c.tol;
  m.epsilon = c.epsilon;
  m.seed = c.seed;
  m.init = c.init == CDM_INIT_UNIFORM ? cdm::InitMode::uniform : cdm::InitMode::gamma_prior;
  m.prior_e = {c.e_shape, c.e_rate};
  m.prior_u = {c.u_shape, c.u_rate};
  m.prior_v = {c.v_shape, c.v_rate};
  return m;
}

void check_rows_match(const cdm::LabeledMatrix& a, const char* an, const cdm::LabeledMatrix& b, const char* bn) {
  if (a.row_ids != b.row_ids)
    cdm::fail(cdm::ErrorKind::dimension, std::string(an) + " (" + std::to_string(a.rows()) + "x" +
                                             std::to_string(a.cols()) + ") and " + bn + " (" +
                                             std::to_string(b.rows()) + "x" + std::to_string(b.cols()) +
                                             ") have different item rows");
}

}  // namespace

extern "C" {

const char* cdm_version(void) { return cdm::tool_version(); }

const char* cdm_status_name(cdm_status s) {
  switch (s) {
    case CDM_OK: return "ok";
    case CDM_ERR_INVALID_ARGUMENT: return "invalid argument";
    case CDM_ERR_IO: return "i/o error";
    case CDM_ERR_PARSE: return "parse error";
    case CDM_ERR_VALIDATION: return "validation error";
    case CDM_ERR_DIMENSION: return "dimension mismatch";
    case CDM_ERR_NUMERIC: return "numeric error";
    case CDM_ERR_UNSUPPORTED: return "unsupported";
    case CDM_ERR_INTERNAL: return "internal error";
  }
  return "unknown status";
}

const char* cdm_last_error(void) { return g_last_error.c_str(); }

void cdm_set_warning_handler(cdm_warning_fn fn, void* user) {
  std::lock_guard lock(g_warn_mutex);
  g_warn_fn = fn;
  g_warn_user = user;
}

// --- matrices ---------------------------------------------------------------

cdm_status cdm_matrix_create(size_t rows, size_t cols, cdm_matrix** out) {
  return guarded([&] {
    need(out, "out");
    cdm::LabeledMatrix m;
    m.row_ids = cdm::sequential_ids("r", rows);
    m.col_ids = cdm::sequential_ids("c", cols);
    m.values = cdm::Matrix::Zero(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
    *out = wrap(std::move(m));
  });
}

cdm_status cdm_matrix_load_csv(const char* path, cdm_matrix** out) {
  return guarded([&] {
    need(path, "path");
    need(out, "out");
    if (!std::filesystem::exists(path)) cdm::fail(cdm::ErrorKind::io, std::string("no such file: ") + path);
    *out = wrap(cdm::read_matrix_csv(path));
  });
}

cdm_status cdm_matrix_save_csv(const cdm_matrix* m, const char* path) {
  return guarded([&] {
    need(m, "matrix");
    need(path, "path");
    cdm::write_matrix_csv(path, m->m);
  });
}

size_t cdm_matrix_rows(const cdm_matrix* m) { return m ? static_cast<size_t>(m->m.rows()) : 0; }
size_t cdm_matrix_cols(const cdm_matrix* m) { return m ? static_cast<size_t>(m->m.cols()) : 0; }

double cdm_matrix_get(const cdm_matrix* m, size_t row, size_t col) {
  if (!m || row >= cdm_matrix_rows(m) || col >= cdm_matrix_cols(m)) return std::numeric_limits<double>::quiet_NaN();
  return m->m.values(static_cast<Eigen::Index>(row), static_cast<Eigen::Index>(col));
}

cdm_status cdm_matrix_set(cdm_matrix* m, size_t row, size_t col, double value) {
  return guarded([&] {
    need(m, "matrix");
    cdm::require(row < cdm_matrix_rows(m) && col < cdm_matrix_cols(m), "matrix index out of range");
    m->m.values(static_cast<Eigen::Index>(row), static_cast<Eigen::Index>(col)) = value;
  });
}

const char* cdm_matrix_row_id(const cdm_matrix* m, size_t row) {
  return m && row < m->m.row_ids.size() ? m->m.row_ids[row].c_str() : nullptr;
}

const char* cdm_matrix_col_id(const cdm_matrix* m, size_t col) {
  return m && col < m->m.col_ids.size() ? m->m.col_ids[col].c_str() : nullptr;
}

cdm_status cdm_matrix_set_row_id(cdm_matrix* m, size_t row, const char* id) {
  return guarded([&] {
    need(m, "matrix");
    need(id, "id");
    cdm::require(row < m->m.row_ids.size(), "row index out of range");
    m->m.row_ids[row] = id;
  });
}

cdm_status cdm_matrix_set_col_id(cdm_matrix* m, size_t col, const char* id) {
  return guarded([&] {
    need(m, "matrix");
    need(id, "id");
    cdm::require(col < m->m.col_ids.size(), "column index out of range");
    m->m.col_ids[col] = id;
  });
}

void cdm_matrix_free(cdm_matrix* m) { delete m; }

// --- item banks -------------------------------------------------------------

cdm_status cdm_item_bank_load(const char* path, cdm_bank_format format, cdm_item_bank** out) {
  return guarded([&] {
    need(path, "path");
    need(out, "out");
    auto bank = cdm::load_item_bank(path, format == CDM_BANK_CSV ? cdm::BankFormat::csv : cdm::BankFormat::json);
    cdm::Warnings w;
    for (const auto& c : bank.orphan_concepts()) w.push_back("item bank: concept \"" + c + "\" is not tagged by any item");
    emit(w);
    *out = new cdm_item_bank{std::move(bank)};
  });
}

cdm_status cdm_item_bank_save_json(const cdm_item_bank* bank, const char* path) {
  return guarded([&] {
    need(bank, "bank");
    need(path, "path");
    cdm::save_item_bank_json(path, bank->bank);
  });
}

size_t cdm_item_bank_items(const cdm_item_bank* bank) { return bank ? bank->bank.size() : 0; }
size_t cdm_item_bank_concepts(const cdm_item_bank* bank) { return bank ? bank->bank.catalog().size() : 0; }

cdm_status cdm_item_bank_qmatrix(const cdm_item_bank* bank, cdm_matrix** out) {
  return guarded([&] {
    need(bank, "bank");
    need(out, "out");
    *out = wrap(cdm::qmatrix_labeled(bank->bank));
  });
}

void cdm_item_bank_free(cdm_item_bank* bank) { delete bank; }

cdm_status cdm_grade(const char* raw_output, const char* answer_key, cdm_grading_rule rule, int* score) {
  return guarded([&] {
    need(raw_output, "raw_output");
    need(answer_key, "answer_key");
    need(score, "score");
    cdm::Warnings w;
    *score = cdm::grade(raw_output, answer_key, rule_of(rule), &w);
    emit(w);
  });
}

cdm_status cdm_aggregate_logs(const cdm_item_bank* bank, const char* const* log_paths, size_t n_paths,
                              cdm_grading_rule rule, int repeats, cdm_matrix** scores, cdm_matrix** weights) {
  return guarded([&] {
    need(bank, "bank");
    need(scores, "scores");
    need(weights, "weights");
    if (n_paths == 0) cdm::fail(cdm::ErrorKind::invalid_argument, "no response log files");
    need(log_paths, "log_paths");
    std::vector<std::filesystem::path> paths;
    for (size_t i = 0; i < n_paths; ++i) {
      need(log_paths[i], "log path");
      if (!std::filesystem::exists(log_paths[i]))
        cdm::fail(cdm::ErrorKind::io, std::string("no such file: ") + log_paths[i]);
      paths.emplace_back(log_paths[i]);
    }
    auto result = cdm::aggregate(cdm::load_response_logs(paths), bank->bank, rule_of(rule), repeats);
    emit(result.warnings);
    auto x = std::make_unique<cdm_matrix>(cdm_matrix{cdm::to_labeled(result.matrix, false)});
    auto w = std::make_unique<cdm_matrix>(cdm_matrix{cdm::to_labeled(result.matrix, true)});
    *scores = x.release();
    *weights = w.release();
  });
}

// --- simulator --------------------------------------------------------------

void cdm_sim_config_default(cdm_sim_config* cfg) {
  if (!cfg) return;
  const cdm::SimConfig d;
  *cfg = cdm_sim_config{d.items,
                        d.models,
                        d.concepts,
                        d.latent_dim,
                        d.prior_e.shape,
                        d.prior_e.rate,
                        d.prior_u.shape,
                        d.prior_u.rate,
                        d.prior_v.shape,
                        d.prior_v.rate,
                        d.seed,
                        d.q_threshold,
                        d.q_mode == cdm::QMode::threshold ? CDM_Q_THRESHOLD : CDM_Q_SAMPLED,
                        d.response_mode == cdm::ResponseMode::mean ? CDM_RESPONSE_MEAN : CDM_RESPONSE_BERNOULLI,
                        d.repeats};
}

cdm_status cdm_simulate(const cdm_sim_config* c, cdm_sim_output** out) {
  return guarded([&] {
    need(c, "config");
    need(out, "out");
    cdm::SimConfig cfg;
    cfg.items = c->items;
    cfg.models = c->models;
    cfg.concepts = c->concepts;
    cfg.latent_dim = c->latent_dim;
    cfg.prior_e = {c->e_shape, c->e_rate};
    cfg.prior_u = {c->u_shape, c->u_rate};
    cfg.prior_v = {c->v_shape, c->v_rate};
    cfg.seed = c->seed;
    cfg.q_threshold = c->q_threshold;
    cfg.q_mode = c->q_mode == CDM_Q_SAMPLED ? cdm::QMode::sampled : cdm::QMode::threshold;
    cfg.response_mode = c->response_mode == CDM_RESPONSE_BERNOULLI ? cdm::ResponseMode::bernoulli : cdm::ResponseMode::mean;
    cfg.repeats = c->repeats;
    *out = new cdm_sim_output{cdm::simulate(cfg), cfg};
  });
}

cdm_status cdm_sim_output_matrix(const cdm_sim_output* s, cdm_sim_matrix which, cdm_matrix** out) {
  return guarded([&] {
    need(s, "simulation");
    need(out, "out");
    const auto& sim = s->sim;
    const auto skills = cdm::sequential_ids("skill", static_cast<std::size_t>(sim.truth.E.cols()));
    switch (which) {
      case CDM_SIM_X: *out = wrap({"item_id", sim.item_ids, sim.model_ids, sim.X}); return;
      case CDM_SIM_W: *out = wrap({"item_id", sim.item_ids, sim.model_ids, sim.W}); return;
      case CDM_SIM_Q: *out = wrap({"item_id", sim.item_ids, sim.concept_ids, sim.Q}); return;
      case CDM_SIM_P_RESPONSE: *out = wrap({"item_id", sim.item_ids, sim.model_ids, sim.p_response}); return;
      case CDM_SIM_P_MASTERY: *out = wrap({"model_id", sim.model_ids, sim.concept_ids, sim.p_mastery}); return;
      case CDM_SIM_E: *out = wrap({"item_id", sim.item_ids, skills, sim.truth.E}); return;
      case CDM_SIM_U: *out = wrap({"skill", skills, sim.model_ids, sim.truth.U}); return;
      case CDM_SIM_V: *out = wrap({"skill", skills, sim.concept_ids, sim.truth.V}); return;
    }
    cdm::fail(cdm::ErrorKind::invalid_argument, "unknown simulation matrix");
  });
}

cdm_status cdm_sim_output_save(const cdm_sim_output* s, const char* dir) {
  return guarded([&] {
    need(s, "simulation");
    need(dir, "dir");
    if (s->sim.X.size() == 0) cdm::fail(cdm::ErrorKind::invalid_argument, "loaded truth bundles cannot be re-saved");
    cdm::save_simulation(dir, s->sim, s->cfg);
  });
}

cdm_status cdm_sim_truth_load(const char* path, cdm_sim_output** out) {
  return guarded([&] {
    need(path, "path");
    need(out, "out");
    if (!std::filesystem::exists(path)) cdm::fail(cdm::ErrorKind::io, std::string("no such file: ") + path);
    *out = new cdm_sim_output{cdm::load_truth(path), {}};
  });
}

void cdm_sim_output_free(cdm_sim_output* s) { delete s; }

// --- solver -----------------------------------------------------------------

void cdm_mcf_config_default(cdm_mcf_config* cfg) {
  if (!cfg) return;
  const cdm::McfConfig d;
  *cfg = cdm_mcf_config{d.latent_dim,    d.beta,           d.lambda_e,       d.lambda_u,       d.lambda_v,
                        d.max_iters,     d.tol,            d.epsilon,        d.seed,           CDM_INIT_GAMMA_PRIOR,
                        d.prior_e.shape, d.prior_e.rate,   d.prior_u.shape,  d.prior_u.rate,   d.prior_v.shape,
                        d.prior_v.rate};
}

cdm_status cdm_fit(const cdm_matrix* X, const cdm_matrix* W, const cdm_matrix* Q, const cdm_mcf_config* c, int starts,
                   cdm_fit_result** out) {
  return guarded([&] {
    need(X, "X");
    need(Q, "Q");
    need(c, "config");
    need(out, "out");
    const cdm::Matrix w = W ? W->m.values : cdm::Matrix::Ones(X->m.rows(), X->m.cols());
    if (W) {
      check_rows_match(X->m, "X", W->m, "W");
      if (W->m.col_ids != X->m.col_ids)
        cdm::fail(cdm::ErrorKind::dimension, "X and W have different model columns");
    }
    check_rows_match(X->m, "X", Q->m, "Q");
    auto cfg = mcf_of(*c);
    auto result = cdm::multistart_fit({X->m.values, w, Q->m.values}, cfg, starts);
    cfg.seed = c->seed;
    *out = new cdm_fit_result{std::move(result), cfg, {X->m.row_ids, X->m.col_ids, Q->m.col_ids}};
  });
}

int cdm_fit_iterations(const cdm_fit_result* r) { return r ? r->result.iterations_run : 0; }
int cdm_fit_converged(const cdm_fit_result* r) { return r && r->result.converged ? 1 : 0; }
uint64_t cdm_fit_seed(const cdm_fit_result* r) { return r ? r->result.seed : 0; }
size_t cdm_fit_trace_length(const cdm_fit_result* r) { return r ? r->result.objective_trace.size() : 0; }

double cdm_fit_trace_value(const cdm_fit_result* r, size_t i) {
  if (!r || i >= r->result.objective_trace.size()) return std::numeric_limits<double>::quiet_NaN();
  return r->result.objective_trace[i];
}

cdm_status cdm_fit_factor(const cdm_fit_result* r, cdm_factor which, cdm_matrix** out) {
  return guarded([&] {
    need(r, "fit");
    need(out, "out");
    const auto& f = r->result.factors;
    const auto skills = cdm::sequential_ids("skill", static_cast<std::size_t>(f.latent_dim()));
    switch (which) {
      case CDM_FACTOR_E: *out = wrap({"item_id", r->ids.items, skills, f.E}); return;
      case CDM_FACTOR_U: *out = wrap({"skill", skills, r->ids.models, f.U}); return;
      case CDM_FACTOR_V: *out = wrap({"skill", skills, r->ids.concepts, f.V}); return;
    }
    cdm::fail(cdm::ErrorKind::invalid_argument, "unknown factor");
  });
}

cdm_status cdm_fit_predict(const cdm_fit_result* r, cdm_matrix** out, size_t* clipped) {
  return guarded([&] {
    need(r, "fit");
    need(out, "out");
    auto p = cdm::predict_scores(r->result.factors);
    if (clipped) *clipped = p.clipped_low + p.clipped_high;
    *out = wrap({"item_id", r->ids.items, r->ids.models, std::move(p.scores)});
  });
}

cdm_status cdm_fit_save(const cdm_fit_result* r, const char* dir) {
  return guarded([&] {
    need(r, "fit");
    need(dir, "dir");
    cdm::save_fit(dir, r->result, r->cfg, r->ids);
  });
}

void cdm_fit_free(cdm_fit_result* r) { delete r; }

cdm_status cdm_fit_mastery(const cdm_fit_result* r, cdm_normalization mode, cdm_mastery** out) {
  return guarded([&] {
    need(r, "fit");
    need(out, "out");
    auto m = cdm::mastery(r->result.factors, norm_of(mode));
    emit(m.warnings);
    *out = new cdm_mastery{{r->ids.models, r->ids.concepts, std::move(m)}};
  });
}

cdm_status cdm_mastery_load(const char* path, cdm_mastery** out) {
  return guarded([&] {
    need(path, "path");
    need(out, "out");
    if (!std::filesystem::exists(path)) cdm::fail(cdm::ErrorKind::io, std::string("no such file: ") + path);
    *out = new cdm_mastery{cdm::load_mastery(path)};
  });
}

cdm_status cdm_mastery_save(const cdm_mastery* m, const char* dir) {
  return guarded([&] {
    need(m, "mastery");
    need(dir, "dir");
    cdm::save_mastery(dir, m->m);
  });
}

size_t cdm_mastery_models(const cdm_mastery* m) { return m ? m->m.model_ids.size() : 0; }
size_t cdm_mastery_concepts(const cdm_mastery* m) { return m ? m->m.concept_ids.size() : 0; }

double cdm_mastery_raw(const cdm_mastery* m, size_t j, size_t k) {
  if (!m || j >= cdm_mastery_models(m) || k >= cdm_mastery_concepts(m)) return std::numeric_limits<double>::quiet_NaN();
  return m->m.mastery.raw(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(k));
}

double cdm_mastery_prob(const cdm_mastery* m, size_t j, size_t k) {
  if (!m || j >= cdm_mastery_models(m) || k >= cdm_mastery_concepts(m)) return std::numeric_limits<double>::quiet_NaN();
  return m->m.mastery.prob(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(k));
}

cdm_normalization cdm_mastery_normalization(const cdm_mastery* m) {
  if (!m) return CDM_NORM_CLIP;
  switch (m->m.mastery.normalization) {
    case cdm::Normalization::clip: return CDM_NORM_CLIP;
    case cdm::Normalization::minmax_global: return CDM_NORM_MINMAX_GLOBAL;
    case cdm::Normalization::minmax_per_concept: return CDM_NORM_MINMAX_PER_CONCEPT;
  }
  return CDM_NORM_CLIP;
}

void cdm_mastery_free(cdm_mastery* m) { delete m; }

cdm_status cdm_recovery_score(const cdm_mastery* m, const cdm_sim_output* truth, double* overall) {
  return guarded([&] {
    need(m, "mastery");
    need(truth, "truth");
    need(overall, "overall");
    auto s = cdm::recovery_score(m->m.mastery.prob, truth->sim.p_mastery);
    emit(s.warnings);
    if (!s.overall) cdm::fail(cdm::ErrorKind::numeric, "recovery score undefined: every model row is constant");
    *overall = *s.overall;
  });
}

// --- metrics ----------------------------------------------------------------

cdm_status cdm_reconstruction_metrics(const cdm_matrix* x_hat, const cdm_matrix* X, const cdm_matrix* W,
                                      double threshold, cdm_reconstruction_report* out) {
  return guarded([&] {
    need(x_hat, "x_hat");
    need(X, "X");
    need(out, "out");
    const cdm::Matrix w = W ? W->m.values : cdm::Matrix::Ones(X->m.rows(), X->m.cols());
    auto r = cdm::reconstruction_metrics(x_hat->m.values, X->m.values, w, threshold);
    emit(r.warnings);
    *out = cdm_reconstruction_report{r.accuracy,
                                     r.auc.value_or(std::numeric_limits<double>::quiet_NaN()),
                                     r.auc ? 1 : 0,
                                     r.rmse,
                                     r.n_cells,
                                     r.binarize_threshold};
  });
}

cdm_status cdm_reconstruction_report_save(const cdm_reconstruction_report* r, const char* path) {
  return guarded([&] {
    need(r, "report");
    need(path, "path");
    cdm::ReconstructionReport rep;
    rep.accuracy = r->accuracy;
    if (r->auc_defined) rep.auc = r->auc;
    else rep.warnings.push_back("all labels identical, AUC undefined");
    rep.rmse = r->rmse;
    rep.n_cells = r->n_cells;
    rep.binarize_threshold = r->binarize_threshold;
    cdm::write_text_file(path, cdm::to_json(rep));
  });
}

cdm_status cdm_concept_counts(const cdm_mastery* m, double threshold, const cdm_matrix* X, const cdm_matrix* W,
                              cdm_concept_report** out) {
  return guarded([&] {
    need(m, "mastery");
    need(out, "out");
    auto report = cdm::concept_counts(m->m.mastery.prob, m->m.model_ids, threshold);
    if (X) {
      const cdm::Matrix w = W ? W->m.values : cdm::Matrix::Ones(X->m.rows(), X->m.cols());
      cdm::attach_observed_scores(report, X->m.col_ids, X->m.values, w);
    }
    *out = new cdm_concept_report{std::move(report)};
  });
}

size_t cdm_concept_report_rows(const cdm_concept_report* r) { return r ? r->report.rows.size() : 0; }

const char* cdm_concept_report_model(const cdm_concept_report* r, size_t row) {
  return r && row < r->report.rows.size() ? r->report.rows[row].model_id.c_str() : nullptr;
}

int cdm_concept_report_mastered(const cdm_concept_report* r, size_t row) {
  return r && row < r->report.rows.size() ? r->report.rows[row].mastered : -1;
}

cdm_status cdm_concept_report_save(const cdm_concept_report* r, const char* dir) {
  return guarded([&] {
    need(r, "report");
    need(dir, "dir");
    const std::filesystem::path d(dir);
    std::filesystem::create_directories(d);
    cdm::write_text_file(d / "concept_counts.json", cdm::to_json(r->report));
    cdm::write_text_file(d / "concept_counts.csv", cdm::to_csv(r->report));
    cdm::write_text_file(d / "concept_counts.txt", cdm::render_table(r->report));
  });
}

void cdm_concept_report_free(cdm_concept_report* r) { delete r; }

cdm_status cdm_cluster_models(const cdm_mastery* m, int n_clusters, cdm_clustering** out) {
  return guarded([&] {
    need(m, "mastery");
    need(out, "out");
    auto r = cdm::cluster_models(m->m.mastery.prob, n_clusters);
    emit(r.warnings);
    *out = new cdm_clustering{std::move(r), m->m.model_ids};
  });
}

int cdm_clustering_assignment(const cdm_clustering* c, size_t model) {
  return c && model < c->result.assignment.size() ? c->result.assignment[model] : -1;
}

cdm_status cdm_clustering_save(const cdm_clustering* c, const char* path) {
  return guarded([&] {
    need(c, "clustering");
    need(path, "path");
    cdm::write_text_file(path, cdm::to_json(c->result, c->model_ids));
  });
}

void cdm_clustering_free(cdm_clustering* c) { delete c; }

cdm_status cdm_heatmap_write(const cdm_mastery* m, const char* dir) {
  return guarded([&] {
    need(m, "mastery");
    need(dir, "dir");
    const std::filesystem::path d(dir);
    std::filesystem::create_directories(d);
    cdm::HeatmapGrid grid{m->m.model_ids, m->m.concept_ids, m->m.mastery.prob, 0.0, 1.0};
    cdm::write_text_file(d / "heatmap.svg", cdm::render_heatmap_svg(grid));
    cdm::write_matrix_csv(d / "heatmap.csv", {"model_id", m->m.model_ids, m->m.concept_ids, m->m.mastery.prob});
  });
}

cdm_status cdm_krippendorff_csv(const char* path, cdm_agreement_distance distance, cdm_agreement_report* out) {
  return guarded([&] {
    need(path, "path");
    need(out, "out");
    if (!std::filesystem::exists(path)) cdm::fail(cdm::ErrorKind::io, std::string("no such file: ") + path);
    const auto d = distance == CDM_AGREEMENT_JACCARD ? cdm::AgreementDistance::jaccard : cdm::AgreementDistance::nominal;
    auto r = cdm::krippendorff_alpha(cdm::read_annotation_csv(path), d);
    *out = cdm_agreement_report{r.alpha, r.n_units, r.n_coders, r.n_pairable};
  });
}

cdm_status cdm_agreement_report_save(const cdm_agreement_report* r, cdm_agreement_distance distance, const char* path) {
  return guarded([&] {
    need(r, "report");
    need(path, "path");
    cdm::AgreementReport rep;
    rep.alpha = r->alpha;
    rep.n_units = r->n_units;
    rep.n_coders = r->n_coders;
    rep.n_pairable = r->n_pairable;
    rep.distance = distance == CDM_AGREEMENT_JACCARD ? cdm::AgreementDistance::jaccard : cdm::AgreementDistance::nominal;
    cdm::write_text_file(path, cdm::to_json(rep));
  });
}

// --- DINA -------------------------------------------------------------------

cdm_status cdm_dina_fit(const cdm_matrix* X, const cdm_matrix* Q, int max_iters, double tol, cdm_dina_result** out) {
  return guarded([&] {
    need(X, "X");
    need(Q, "Q");
    need(out, "out");
    check_rows_match(X->m, "X", Q->m, "Q");
    auto fit = cdm::dina::em_fit(cdm::dina::binarize_scores(X->m.values), Q->m.values, max_iters, tol);
    emit(fit.warnings);
    *out = new cdm_dina_result{std::move(fit), X->m.row_ids, X->m.col_ids, Q->m.col_ids};
  });
}

double cdm_dina_slip(const cdm_dina_result* r, size_t item) {
  return r && item < r->fit.params.slip.size() ? r->fit.params.slip[item] : std::numeric_limits<double>::quiet_NaN();
}

double cdm_dina_guess(const cdm_dina_result* r, size_t item) {
  return r && item < r->fit.params.guess.size() ? r->fit.params.guess[item] : std::numeric_limits<double>::quiet_NaN();
}

int cdm_dina_mastered(const cdm_dina_result* r, size_t model, size_t k) {
  if (!r || model >= r->fit.map_profiles.size() || k >= r->fit.map_profiles[model].size()) return -1;
  return r->fit.map_profiles[model][k];
}

cdm_status cdm_dina_save(const cdm_dina_result* r, const char* path) {
  return guarded([&] {
    need(r, "dina result");
    need(path, "path");
    cdm::write_text_file(path, cdm::dina::to_json(r->fit, r->item_ids, r->model_ids, r->concept_ids));
  });
}

void cdm_dina_free(cdm_dina_result* r) { delete r; }

// --- manifests --------------------------------------------------------------

cdm_status cdm_manifest_create(const char* command, cdm_manifest** out) {
  return guarded([&] {
    need(command, "command");
    need(out, "out");
    auto m = std::make_unique<cdm_manifest>();
    m->manifest.command = command;
    m->manifest.started_at = cdm::utc_timestamp();
    *out = m.release();
  });
}

cdm_status cdm_manifest_set(cdm_manifest* m, const char* key, const char* value) {
  return guarded([&] {
    need(m, "manifest");
    need(key, "key");
    need(value, "value");
    for (auto& [k, v] : m->manifest.config)
      if (k == key) {
        v = value;
        return;
      }
    m->manifest.config.emplace_back(key, value);
  });
}

cdm_status cdm_manifest_add_input(cdm_manifest* m, const char* path) {
  return guarded([&] {
    need(m, "manifest");
    need(path, "path");
    if (!std::filesystem::exists(path)) cdm::fail(cdm::ErrorKind::io, std::string("no such file: ") + path);
    m->manifest.inputs.emplace_back(path);
  });
}

void cdm_manifest_set_seed(cdm_manifest* m, uint64_t seed) {
  if (!m) return;
  m->manifest.seed = seed;
  m->manifest.has_seed = true;
}

cdm_status cdm_manifest_write(const cdm_manifest* m, const char* dir) {
  return guarded([&] {
    need(m, "manifest");
    need(dir, "dir");
    m->manifest.write(dir);
  });
}

void cdm_manifest_free(cdm_manifest* m) { delete m; }

}  // extern "C"
