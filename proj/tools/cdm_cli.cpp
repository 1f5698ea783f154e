// cdm: command-line front end over the cdmkit C interface.

#include <glob.h>

#include <CLI11.hpp>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "cdmkit/cdmkit.h"

namespace fs = std::filesystem;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitRuntime = 1;
constexpr int kExitUsage = 2;

// Raised from command bodies; carries the exit code.
struct CommandError {
  int code;
  std::string message;
};

int exit_code_for(cdm_status s) {
  switch (s) {
    case CDM_OK: return kExitOk;
    case CDM_ERR_NUMERIC:
    case CDM_ERR_INTERNAL: return kExitRuntime;
    default: return kExitUsage;
  }
}

void check(cdm_status s, const std::string& context) {
  if (s == CDM_OK) return;
  throw CommandError{exit_code_for(s), context + ": " + cdm_last_error()};
}

[[noreturn]] void usage_error(const std::string& msg) { throw CommandError{kExitUsage, msg}; }

template <class T, void (*Free)(T*)>
struct Deleter {
  void operator()(T* p) const { Free(p); }
};

using MatrixPtr = std::unique_ptr<cdm_matrix, Deleter<cdm_matrix, cdm_matrix_free>>;
using BankPtr = std::unique_ptr<cdm_item_bank, Deleter<cdm_item_bank, cdm_item_bank_free>>;
using SimPtr = std::unique_ptr<cdm_sim_output, Deleter<cdm_sim_output, cdm_sim_output_free>>;
using FitPtr = std::unique_ptr<cdm_fit_result, Deleter<cdm_fit_result, cdm_fit_free>>;
using MasteryPtr = std::unique_ptr<cdm_mastery, Deleter<cdm_mastery, cdm_mastery_free>>;
using ConceptPtr = std::unique_ptr<cdm_concept_report, Deleter<cdm_concept_report, cdm_concept_report_free>>;
using ClusterPtr = std::unique_ptr<cdm_clustering, Deleter<cdm_clustering, cdm_clustering_free>>;
using DinaPtr = std::unique_ptr<cdm_dina_result, Deleter<cdm_dina_result, cdm_dina_free>>;
using ManifestPtr = std::unique_ptr<cdm_manifest, Deleter<cdm_manifest, cdm_manifest_free>>;

std::vector<std::string> g_warnings;

void on_warning(const char* message, void*) {
  g_warnings.emplace_back(message);
  std::cerr << "warning: " << message << "\n";
}

void require_file(const std::string& path) {
  if (!fs::is_regular_file(path)) usage_error("input file not found: " + path);
}

MatrixPtr load_matrix(const std::string& path) {
  require_file(path);
  cdm_matrix* m = nullptr;
  check(cdm_matrix_load_csv(path.c_str(), &m), path);
  return MatrixPtr(m);
}

void ensure_dir(const std::string& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) usage_error("cannot create output directory " + dir);
}

std::string fmt(double v) {
  std::ostringstream os;
  os.precision(17);
  os << v;
  return os.str();
}

// Manifest recording the effective value of every option of `sub`.
ManifestPtr make_manifest(const CLI::App& sub) {
  cdm_manifest* raw = nullptr;
  check(cdm_manifest_create(sub.get_name().c_str(), &raw), "manifest");
  ManifestPtr m(raw);
  for (const CLI::Option* o : sub.get_options()) {
    const std::string name = o->get_single_name();
    if (name == "help" || name == "config" || name.empty()) continue;
    std::string value;
    if (o->count() > 0) {
      const auto& res = o->results();
      for (std::size_t i = 0; i < res.size(); ++i) value += (i ? "," : "") + res[i];
    } else {
      value = o->get_default_str();
    }
    check(cdm_manifest_set(m.get(), name.c_str(), value.c_str()), "manifest");
  }
  return m;
}

void add_input(cdm_manifest* m, const std::string& path) { check(cdm_manifest_add_input(m, path.c_str()), path); }

cdm_normalization parse_norm(const std::string& s) {
  if (s == "clip") return CDM_NORM_CLIP;
  if (s == "minmax_global") return CDM_NORM_MINMAX_GLOBAL;
  if (s == "minmax_per_concept") return CDM_NORM_MINMAX_PER_CONCEPT;
  usage_error("unknown normalization: " + s);
}

// --- simulate -----------------------------------------------------------------

struct SimulateOpts {
  cdm_sim_config cfg{};
  std::string q_mode = "threshold";
  std::string response_mode = "mean";
  std::string out;
};

void run_simulate(const CLI::App& sub, SimulateOpts& o) {
  o.cfg.q_mode = o.q_mode == "sampled" ? CDM_Q_SAMPLED : CDM_Q_THRESHOLD;
  o.cfg.response_mode = o.response_mode == "bernoulli" ? CDM_RESPONSE_BERNOULLI : CDM_RESPONSE_MEAN;
  auto manifest = make_manifest(sub);
  cdm_manifest_set_seed(manifest.get(), o.cfg.seed);
  cdm_sim_output* raw = nullptr;
  check(cdm_simulate(&o.cfg, &raw), "simulate");
  SimPtr sim(raw);
  ensure_dir(o.out);
  check(cdm_sim_output_save(sim.get(), o.out.c_str()), o.out);
  check(cdm_manifest_write(manifest.get(), o.out.c_str()), o.out);
  std::cout << "wrote simulation (" << o.cfg.items << " items, " << o.cfg.models << " models, " << o.cfg.concepts
            << " concepts) to " << o.out << "\n";
}

// --- grade ------------------------------------------------------------------

struct GradeOpts {
  std::string bank;
  std::string bank_format = "json";
  std::vector<std::string> logs;
  std::string rule = "choice_letter";
  int repeats = 10;
  std::string out;
};

std::vector<std::string> expand_globs(const std::vector<std::string>& patterns) {
  std::vector<std::string> paths;
  for (const auto& p : patterns) {
    glob_t g{};
    const int rc = glob(p.c_str(), 0, nullptr, &g);
    if (rc == 0)
      for (std::size_t i = 0; i < g.gl_pathc; ++i) paths.emplace_back(g.gl_pathv[i]);
    globfree(&g);
    if (rc != 0 && rc != GLOB_NOMATCH) usage_error("cannot expand pattern " + p);
  }
  return paths;
}

void run_grade(const CLI::App& sub, GradeOpts& o) {
  require_file(o.bank);
  const auto paths = expand_globs(o.logs);
  if (paths.empty()) usage_error("no response logs match the given pattern(s)");
  auto manifest = make_manifest(sub);
  add_input(manifest.get(), o.bank);
  for (const auto& p : paths) add_input(manifest.get(), p);

  cdm_item_bank* braw = nullptr;
  check(cdm_item_bank_load(o.bank.c_str(), o.bank_format == "csv" ? CDM_BANK_CSV : CDM_BANK_JSON, &braw), o.bank);
  BankPtr bank(braw);
  std::vector<const char*> cpaths;
  for (const auto& p : paths) cpaths.push_back(p.c_str());
  cdm_matrix* xr = nullptr;
  cdm_matrix* wr = nullptr;
  const auto rule = o.rule == "exact" ? CDM_GRADE_EXACT : CDM_GRADE_CHOICE_LETTER;
  check(cdm_aggregate_logs(bank.get(), cpaths.data(), cpaths.size(), rule, o.repeats, &xr, &wr), "grade");
  MatrixPtr x(xr), w(wr);

  ensure_dir(o.out);
  const fs::path dir(o.out);
  check(cdm_matrix_save_csv(x.get(), (dir / "X.csv").c_str()), "X.csv");
  check(cdm_matrix_save_csv(w.get(), (dir / "W.csv").c_str()), "W.csv");
  cdm_matrix* qr = nullptr;
  check(cdm_item_bank_qmatrix(bank.get(), &qr), "Q-matrix");
  MatrixPtr q(qr);
  check(cdm_matrix_save_csv(q.get(), (dir / "Q.csv").c_str()), "Q.csv");
  std::ofstream log(dir / "grading_warnings.log");
  for (const auto& msg : g_warnings) log << msg << "\n";
  if (!log) throw CommandError{kExitRuntime, "cannot write grading_warnings.log"};
  check(cdm_manifest_write(manifest.get(), o.out.c_str()), o.out);
  std::cout << "graded " << cdm_matrix_rows(x.get()) << " items x " << cdm_matrix_cols(x.get()) << " models, "
            << g_warnings.size() << " warning(s)\n";
}

// --- fit --------------------------------------------------------------------

struct FitOpts {
  std::string in;
  std::string x, w, q, truth;
  cdm_mcf_config cfg{};
  std::string init = "gamma_prior";
  std::string normalization = "clip";
  int starts = 8;
  double threshold = 0.5;
  std::optional<double> binarize_x;
  std::string out;
};

void resolve_inputs(FitOpts& o) {
  if (!o.in.empty()) {
    const fs::path d(o.in);
    if (o.x.empty()) o.x = (d / "X.csv").string();
    if (o.w.empty() && fs::exists(d / "W.csv")) o.w = (d / "W.csv").string();
    if (o.q.empty()) o.q = (d / "Q.csv").string();
  }
  if (o.x.empty()) usage_error("missing --x (or --in)");
  if (o.q.empty()) usage_error("missing --q (or --in)");
  require_file(o.x);
  require_file(o.q);
  if (!o.w.empty()) require_file(o.w);
  if (!o.truth.empty()) require_file(o.truth);
}

struct FitInputs {
  MatrixPtr x, w, q;
};

FitInputs load_fit_inputs(const FitOpts& o, cdm_manifest* manifest) {
  FitInputs in{load_matrix(o.x), nullptr, load_matrix(o.q)};
  if (o.binarize_x) {
    const double thr = *o.binarize_x;
    for (std::size_t i = 0; i < cdm_matrix_rows(in.x.get()); ++i)
      for (std::size_t j = 0; j < cdm_matrix_cols(in.x.get()); ++j)
        check(cdm_matrix_set(in.x.get(), i, j, cdm_matrix_get(in.x.get(), i, j) >= thr ? 1.0 : 0.0), o.x);
  }
  add_input(manifest, o.x);
  add_input(manifest, o.q);
  if (!o.w.empty()) {
    in.w = load_matrix(o.w);
    add_input(manifest, o.w);
  }
  return in;
}

cdm_reconstruction_report reconstruction(const cdm_fit_result* fit, const FitInputs& in, double threshold,
                                         std::size_t* clipped) {
  cdm_matrix* praw = nullptr;
  check(cdm_fit_predict(fit, &praw, clipped), "predict");
  MatrixPtr pred(praw);
  cdm_reconstruction_report rep{};
  check(cdm_reconstruction_metrics(pred.get(), in.x.get(), in.w.get(), threshold, &rep), "metrics");
  return rep;
}

void run_fit(const CLI::App& sub, FitOpts& o) {
  resolve_inputs(o);
  o.cfg.init = o.init == "uniform" ? CDM_INIT_UNIFORM : CDM_INIT_GAMMA_PRIOR;
  const auto norm = parse_norm(o.normalization);
  auto manifest = make_manifest(sub);
  cdm_manifest_set_seed(manifest.get(), o.cfg.seed);
  const auto in = load_fit_inputs(o, manifest.get());

  cdm_fit_result* fraw = nullptr;
  check(cdm_fit(in.x.get(), in.w.get(), in.q.get(), &o.cfg, o.starts, &fraw), "fit");
  FitPtr fit(fraw);
  cdm_mastery* mraw = nullptr;
  check(cdm_fit_mastery(fit.get(), norm, &mraw), "mastery");
  MasteryPtr mastery(mraw);
  std::size_t clipped = 0;
  const auto rep = reconstruction(fit.get(), in, o.threshold, &clipped);

  ensure_dir(o.out);
  const fs::path dir(o.out);
  check(cdm_fit_save(fit.get(), o.out.c_str()), o.out);
  check(cdm_mastery_save(mastery.get(), o.out.c_str()), o.out);
  check(cdm_reconstruction_report_save(&rep, (dir / "reconstruction.json").c_str()), "reconstruction.json");

  std::cout << "iterations " << cdm_fit_iterations(fit.get()) << ", converged "
            << (cdm_fit_converged(fit.get()) ? "yes" : "no") << ", best seed " << cdm_fit_seed(fit.get()) << "\n";
  std::cout << "objective " << fmt(cdm_fit_trace_value(fit.get(), cdm_fit_trace_length(fit.get()) - 1)) << "\n";
  std::cout << "accuracy " << fmt(rep.accuracy) << ", auc " << (rep.auc_defined ? fmt(rep.auc) : "undefined")
            << ", rmse " << fmt(rep.rmse) << ", clipped cells " << clipped << "\n";

  if (!o.truth.empty()) {
    cdm_sim_output* traw = nullptr;
    check(cdm_sim_truth_load(o.truth.c_str(), &traw), o.truth);
    SimPtr truth(traw);
    add_input(manifest.get(), o.truth);
    double rho = 0.0;
    check(cdm_recovery_score(mastery.get(), truth.get(), &rho), "recovery");
    std::ofstream f(dir / "recovery.json");
    f << "{\n  \"mean_spearman\": " << fmt(rho) << "\n}\n";
    if (!f) throw CommandError{kExitRuntime, "cannot write recovery.json"};
    std::cout << "mastery recovery (mean Spearman) " << fmt(rho) << "\n";
  }
  check(cdm_manifest_write(manifest.get(), o.out.c_str()), o.out);
}

// --- diagnose ---------------------------------------------------------------

struct DiagnoseOpts {
  std::string mastery;
  std::string x, w;
  double threshold = 0.9;
  int clusters = 3;
  std::string out;
};

void run_diagnose(const CLI::App& sub, DiagnoseOpts& o) {
  require_file(o.mastery);
  if (!o.x.empty()) require_file(o.x);
  if (!o.w.empty()) require_file(o.w);
  auto manifest = make_manifest(sub);
  add_input(manifest.get(), o.mastery);

  cdm_mastery* mraw = nullptr;
  check(cdm_mastery_load(o.mastery.c_str(), &mraw), o.mastery);
  MasteryPtr mastery(mraw);
  MatrixPtr x, w;
  if (!o.x.empty()) {
    x = load_matrix(o.x);
    add_input(manifest.get(), o.x);
  }
  if (!o.w.empty()) {
    w = load_matrix(o.w);
    add_input(manifest.get(), o.w);
  }

  cdm_concept_report* craw = nullptr;
  check(cdm_concept_counts(mastery.get(), o.threshold, x.get(), w.get(), &craw), "concept counts");
  ConceptPtr counts(craw);

  ensure_dir(o.out);
  const fs::path dir(o.out);
  check(cdm_concept_report_save(counts.get(), o.out.c_str()), o.out);
  check(cdm_heatmap_write(mastery.get(), o.out.c_str()), o.out);

  const std::size_t n_models = cdm_mastery_models(mastery.get());
  if (n_models < 2) {
    std::cout << "clustering skipped: needs at least two models\n";
  } else {
    const int k = std::min<int>(o.clusters, static_cast<int>(n_models));
    cdm_clustering* clraw = nullptr;
    check(cdm_cluster_models(mastery.get(), k, &clraw), "clustering");
    ClusterPtr clusters(clraw);
    check(cdm_clustering_save(clusters.get(), (dir / "clusters.json").c_str()), "clusters.json");
  }
  check(cdm_manifest_write(manifest.get(), o.out.c_str()), o.out);

  std::ifstream table(dir / "concept_counts.txt");
  std::cout << table.rdbuf();
}

// --- agreement --------------------------------------------------------------

struct AgreementOpts {
  std::string annotations;
  std::string distance = "nominal";
  std::string out;
};

void run_agreement(const CLI::App& sub, AgreementOpts& o) {
  require_file(o.annotations);
  auto manifest = make_manifest(sub);
  add_input(manifest.get(), o.annotations);
  const auto d = o.distance == "jaccard" ? CDM_AGREEMENT_JACCARD : CDM_AGREEMENT_NOMINAL;
  cdm_agreement_report rep{};
  check(cdm_krippendorff_csv(o.annotations.c_str(), d, &rep), o.annotations);
  ensure_dir(o.out);
  check(cdm_agreement_report_save(&rep, d, (fs::path(o.out) / "agreement.json").c_str()), "agreement.json");
  check(cdm_manifest_write(manifest.get(), o.out.c_str()), o.out);
  std::cout << "krippendorff alpha " << fmt(rep.alpha) << " (" << rep.n_units << " units, " << rep.n_coders
            << " coders)\n";
}

// --- sweep ------------------------------------------------------------------

struct SweepOpts {
  FitOpts fit;
  std::vector<int> t_grid{2, 5, 8};
  std::vector<double> beta_grid{0.0, 1.0, 5.0};
};

void run_sweep(const CLI::App& sub, SweepOpts& s) {
  FitOpts& o = s.fit;
  resolve_inputs(o);
  o.cfg.init = o.init == "uniform" ? CDM_INIT_UNIFORM : CDM_INIT_GAMMA_PRIOR;
  const auto norm = parse_norm(o.normalization);
  auto manifest = make_manifest(sub);
  cdm_manifest_set_seed(manifest.get(), o.cfg.seed);
  const auto in = load_fit_inputs(o, manifest.get());
  SimPtr truth;
  if (!o.truth.empty()) {
    cdm_sim_output* traw = nullptr;
    check(cdm_sim_truth_load(o.truth.c_str(), &traw), o.truth);
    truth.reset(traw);
    add_input(manifest.get(), o.truth);
  }

  std::ostringstream csv;
  csv << "t,beta,objective,iterations,converged,accuracy,auc,rmse" << (truth ? ",mean_spearman" : "") << "\n";
  for (int t : s.t_grid) {
    for (double beta : s.beta_grid) {
      cdm_mcf_config cfg = o.cfg;
      cfg.latent_dim = t;
      cfg.beta = beta;
      cdm_fit_result* fraw = nullptr;
      check(cdm_fit(in.x.get(), in.w.get(), in.q.get(), &cfg, o.starts, &fraw),
            "fit t=" + std::to_string(t) + " beta=" + fmt(beta));
      FitPtr fit(fraw);
      const auto rep = reconstruction(fit.get(), in, o.threshold, nullptr);
      csv << t << "," << fmt(beta) << "," << fmt(cdm_fit_trace_value(fit.get(), cdm_fit_trace_length(fit.get()) - 1))
          << "," << cdm_fit_iterations(fit.get()) << "," << (cdm_fit_converged(fit.get()) ? "true" : "false") << ","
          << fmt(rep.accuracy) << "," << (rep.auc_defined ? fmt(rep.auc) : "") << "," << fmt(rep.rmse);
      if (truth) {
        cdm_mastery* mraw = nullptr;
        check(cdm_fit_mastery(fit.get(), norm, &mraw), "mastery");
        MasteryPtr mastery(mraw);
        double rho = 0.0;
        const bool ok = cdm_recovery_score(mastery.get(), truth.get(), &rho) == CDM_OK;
        csv << "," << (ok ? fmt(rho) : "");
      }
      csv << "\n";
      std::cerr << "t=" << t << " beta=" << fmt(beta) << " done\n";
    }
  }
  ensure_dir(o.out);
  std::ofstream f(fs::path(o.out) / "sweep.csv", std::ios::binary);
  f << csv.str();
  if (!f) throw CommandError{kExitRuntime, "cannot write sweep.csv"};
  check(cdm_manifest_write(manifest.get(), o.out.c_str()), o.out);
  std::cout << csv.str();
}

// --- dina -------------------------------------------------------------------

struct DinaOpts {
  std::string x, q;
  int max_iters = 500;
  double tol = 1e-8;
  std::string out;
};

void run_dina(const CLI::App& sub, DinaOpts& o) {
  require_file(o.x);
  require_file(o.q);
  auto manifest = make_manifest(sub);
  auto x = load_matrix(o.x);
  auto q = load_matrix(o.q);
  add_input(manifest.get(), o.x);
  add_input(manifest.get(), o.q);
  cdm_dina_result* raw = nullptr;
  check(cdm_dina_fit(x.get(), q.get(), o.max_iters, o.tol, &raw), "dina");
  DinaPtr fit(raw);
  ensure_dir(o.out);
  check(cdm_dina_save(fit.get(), (fs::path(o.out) / "dina.json").c_str()), "dina.json");
  check(cdm_manifest_write(manifest.get(), o.out.c_str()), o.out);
  std::cout << "wrote " << (fs::path(o.out) / "dina.json").string() << "\n";
}

void add_mcf_options(CLI::App* sub, FitOpts& o) {
  sub->add_option("--in", o.in, "Directory holding X.csv, Q.csv and optional W.csv");
  sub->add_option("--x", o.x, "Response matrix CSV (items x models)");
  sub->add_option("--w", o.w, "Weight matrix CSV; all ones when omitted");
  sub->add_option("--q", o.q, "Q-matrix CSV (items x concepts)");
  sub->add_option("--truth", o.truth, "Simulator truth.json for mastery recovery");
  sub->add_option("--beta", o.cfg.beta, "Weight of the Q reconstruction term")->capture_default_str()->check(CLI::NonNegativeNumber);
  sub->add_option("--lambda-e", o.cfg.lambda_e)->capture_default_str()->check(CLI::NonNegativeNumber);
  sub->add_option("--lambda-u", o.cfg.lambda_u)->capture_default_str()->check(CLI::NonNegativeNumber);
  sub->add_option("--lambda-v", o.cfg.lambda_v)->capture_default_str()->check(CLI::NonNegativeNumber);
  sub->add_option("--max-iters", o.cfg.max_iters)->capture_default_str()->check(CLI::NonNegativeNumber);
  sub->add_option("--tol", o.cfg.tol, "Relative objective decrease that stops the solver")->capture_default_str()->check(CLI::NonNegativeNumber);
  sub->add_option("--epsilon", o.cfg.epsilon)->capture_default_str()->check(CLI::PositiveNumber);
  sub->add_option("--seed", o.cfg.seed)->capture_default_str();
  sub->add_option("--init", o.init)->capture_default_str()->check(CLI::IsMember({"gamma_prior", "uniform"}));
  sub->add_option("--starts", o.starts, "Number of seeded restarts")->capture_default_str()->check(CLI::PositiveNumber);
  sub->add_option("--normalization", o.normalization)
      ->capture_default_str()
      ->check(CLI::IsMember({"clip", "minmax_global", "minmax_per_concept"}));
  sub->add_option("--threshold", o.threshold, "Binarization threshold for accuracy/AUC")->capture_default_str()->check(CLI::Range(0.0, 1.0));
  sub->add_option("--binarize-x", o.binarize_x, "Binarize X at this threshold before fitting (ties to 1)")
      ->check(CLI::Range(0.0, 1.0));
  sub->add_option("--out", o.out, "Output directory")->required();
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Cognitive diagnosis of model response matrices"};
  app.set_version_flag("--version", std::string(cdm_version()));
  app.set_config("--config", "", "TOML/INI file with option defaults; flags override it");
  app.require_subcommand(1);
  cdm_set_warning_handler(on_warning, nullptr);

  SimulateOpts sim;
  cdm_sim_config_default(&sim.cfg);
  auto* simulate = app.add_subcommand("simulate", "Sample a planted response data set");
  simulate->add_option("--m", sim.cfg.items, "Items")->capture_default_str()->check(CLI::PositiveNumber);
  simulate->add_option("--n", sim.cfg.models, "Models")->capture_default_str()->check(CLI::PositiveNumber);
  simulate->add_option("--k", sim.cfg.concepts, "Concepts")->capture_default_str()->check(CLI::PositiveNumber);
  simulate->add_option("--t", sim.cfg.latent_dim, "Latent skills")->capture_default_str()->check(CLI::PositiveNumber);
  simulate->add_option("--seed", sim.cfg.seed)->capture_default_str();
  simulate->add_option("--repeats", sim.cfg.repeats)->capture_default_str()->check(CLI::PositiveNumber);
  simulate->add_option("--q-threshold", sim.cfg.q_threshold)->capture_default_str()->check(CLI::Range(0.0, 1.0));
  simulate->add_option("--q-mode", sim.q_mode)->capture_default_str()->check(CLI::IsMember({"threshold", "sampled"}));
  simulate->add_option("--response-mode", sim.response_mode)
      ->capture_default_str()
      ->check(CLI::IsMember({"mean", "bernoulli"}));
  simulate->add_option("--e-shape", sim.cfg.e_shape)->capture_default_str()->check(CLI::PositiveNumber);
  simulate->add_option("--e-rate", sim.cfg.e_rate)->capture_default_str()->check(CLI::PositiveNumber);
  simulate->add_option("--u-shape", sim.cfg.u_shape)->capture_default_str()->check(CLI::PositiveNumber);
  simulate->add_option("--u-rate", sim.cfg.u_rate)->capture_default_str()->check(CLI::PositiveNumber);
  simulate->add_option("--v-shape", sim.cfg.v_shape)->capture_default_str()->check(CLI::PositiveNumber);
  simulate->add_option("--v-rate", sim.cfg.v_rate)->capture_default_str()->check(CLI::PositiveNumber);
  simulate->add_option("--out", sim.out, "Output directory")->required();

  GradeOpts grade;
  auto* grade_cmd = app.add_subcommand("grade", "Grade JSONL response logs into X and W");
  grade_cmd->add_option("--bank", grade.bank, "Item bank file")->required();
  grade_cmd->add_option("--bank-format", grade.bank_format)->capture_default_str()->check(CLI::IsMember({"json", "csv"}));
  grade_cmd->add_option("--logs", grade.logs, "Log files or glob patterns")->required();
  grade_cmd->add_option("--rule", grade.rule)->capture_default_str()->check(CLI::IsMember({"choice_letter", "exact"}));
  grade_cmd->add_option("--repeats", grade.repeats)->capture_default_str()->check(CLI::PositiveNumber);
  grade_cmd->add_option("--out", grade.out, "Output directory")->required();

  FitOpts fit;
  cdm_mcf_config_default(&fit.cfg);
  auto* fit_cmd = app.add_subcommand("fit", "Fit the co-factorization and write factors and mastery");
  fit_cmd->add_option("--t", fit.cfg.latent_dim, "Latent skills")->capture_default_str()->check(CLI::PositiveNumber);
  add_mcf_options(fit_cmd, fit);

  DiagnoseOpts diag;
  auto* diag_cmd = app.add_subcommand("diagnose", "Concept counts, heatmap and model clusters");
  diag_cmd->add_option("--mastery", diag.mastery, "mastery.json from fit")->required();
  diag_cmd->add_option("--x", diag.x, "Response matrix for observed accuracy");
  diag_cmd->add_option("--w", diag.w, "Weights for observed accuracy");
  diag_cmd->add_option("--threshold", diag.threshold, "Mastery threshold (strict >)")
      ->capture_default_str()
      ->check(CLI::Range(0.0, 1.0));
  diag_cmd->add_option("--clusters", diag.clusters)->capture_default_str()->check(CLI::PositiveNumber);
  diag_cmd->add_option("--out", diag.out, "Output directory")->required();

  AgreementOpts agree;
  auto* agree_cmd = app.add_subcommand("agreement", "Krippendorff alpha over an annotation CSV");
  agree_cmd->add_option("--annotations", agree.annotations, "unit_id,coder columns CSV")->required();
  agree_cmd->add_option("--distance", agree.distance)->capture_default_str()->check(CLI::IsMember({"nominal", "jaccard"}));
  agree_cmd->add_option("--out", agree.out, "Output directory")->required();

  SweepOpts sweep;
  cdm_mcf_config_default(&sweep.fit.cfg);
  sweep.fit.starts = 1;
  auto* sweep_cmd = app.add_subcommand("sweep", "Fit over a T x beta grid and summarize");
  sweep_cmd->add_option("--t-grid", sweep.t_grid, "Latent dimensions")->capture_default_str()->delimiter(',')->check(CLI::PositiveNumber);
  sweep_cmd->add_option("--beta-grid", sweep.beta_grid, "Beta values")->capture_default_str()->delimiter(',')->check(CLI::NonNegativeNumber);
  add_mcf_options(sweep_cmd, sweep.fit);

  DinaOpts dina;
  auto* dina_cmd = app.add_subcommand("dina", "Fit the DINA model by EM");
  dina_cmd->add_option("--x", dina.x, "Response matrix CSV")->required();
  dina_cmd->add_option("--q", dina.q, "Q-matrix CSV")->required();
  dina_cmd->add_option("--max-iters", dina.max_iters)->capture_default_str()->check(CLI::NonNegativeNumber);
  dina_cmd->add_option("--tol", dina.tol)->capture_default_str()->check(CLI::NonNegativeNumber);
  dina_cmd->add_option("--out", dina.out, "Output directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (*simulate) run_simulate(*simulate, sim);
    else if (*grade_cmd) run_grade(*grade_cmd, grade);
    else if (*fit_cmd) run_fit(*fit_cmd, fit);
    else if (*diag_cmd) run_diagnose(*diag_cmd, diag);
    else if (*agree_cmd) run_agreement(*agree_cmd, agree);
    else if (*sweep_cmd) run_sweep(*sweep_cmd, sweep);
    else if (*dina_cmd) run_dina(*dina_cmd, dina);
  } catch (const CommandError& e) {
    std::cerr << "error: " << e.message << "\n";
    return e.code;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
  return kExitOk;
}
