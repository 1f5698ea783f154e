// Acceptance gate: one PASS/FAIL line per criterion; exit status 1 if any fails.
#include <sys/wait.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "cdmkit/dina.hpp"
#include "cdmkit/mcf.hpp"
#include "cdmkit/metrics.hpp"
#include "cdmkit/report.hpp"
#include "cdmkit/simulate.hpp"

namespace fs = std::filesystem;
using namespace cdm;

namespace {

// Pinned tolerances.
constexpr double kAucMin = 0.95;
constexpr double kRmseMax = 0.30;
constexpr double kRuntimeMaxSec = 60.0;
constexpr double kSpearmanMin = 0.9;
constexpr int kSpearmanSeedsRequired = 4;
constexpr double kMonotoneSlack = 1e-9;
constexpr double kGradRelTol = 1e-4;
constexpr double kFdStep = 1e-5;
constexpr double kAucOracleTol = 1e-12;
constexpr double kDinaParamTol = 0.1;
constexpr double kDinaMapMin = 0.9;
constexpr double kCrossAgreeMin = 0.95;
constexpr double kChanceAlphaMax = 0.05;

struct Outcome {
  bool pass;
  std::string detail;
};

std::string num(double v, int digits = 4) {
  std::ostringstream os;
  os.precision(digits);
  os << v;
  return os.str();
}

Matrix uniform(Eigen::Index r, Eigen::Index c, std::mt19937_64& rng, double lo = 0.0, double hi = 1.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  Matrix m(r, c);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = u(rng);
  return m;
}

// Binary Q with at least one tag per row.
Matrix random_q(Eigen::Index m, Eigen::Index k, std::mt19937_64& rng) {
  std::bernoulli_distribution b(0.3);
  Matrix q(m, k);
  for (Eigen::Index i = 0; i < m; ++i) {
    for (Eigen::Index j = 0; j < k; ++j) q(i, j) = b(rng) ? 1.0 : 0.0;
    if (q.row(i).sum() == 0) q(i, static_cast<Eigen::Index>(rng() % static_cast<std::uint64_t>(k))) = 1.0;
  }
  return q;
}

McfConfig planted_config(int t) {
  McfConfig c;
  c.latent_dim = t;
  return c;
}

// --- 1 and 2 ----------------------------------------------------------------

struct RecoveryRun {
  ReconstructionReport recon;
  std::optional<double> spearman;
  double seconds;
};

RecoveryRun recovery_run(std::uint64_t seed) {
  SimConfig sc;
  sc.seed = seed;
  const auto sim = simulate(sc);
  const auto start = std::chrono::steady_clock::now();
  const McfProblem p{sim.X, sim.W, sim.Q};
  const auto fit = multistart_fit(p, planted_config(sc.latent_dim), 8);
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  const auto recon = reconstruction_metrics(predict_scores(fit.factors).scores, sim.X, sim.W);
  const auto rho = recovery_score(mastery(fit.factors, Normalization::minmax_global), sim).overall;
  return {recon, rho, secs};
}

std::map<std::uint64_t, RecoveryRun> g_runs;

const RecoveryRun& run_for(std::uint64_t seed) {
  auto it = g_runs.find(seed);
  if (it == g_runs.end()) it = g_runs.emplace(seed, recovery_run(seed)).first;
  return it->second;
}

Outcome criterion1() {
  const auto& r = run_for(7);
  const double a = r.recon.auc.value_or(0.0);
  const bool ok = r.recon.auc && a >= kAucMin && r.recon.rmse <= kRmseMax && r.seconds < kRuntimeMaxSec;
  return {ok, "auc=" + num(a) + " rmse=" + num(r.recon.rmse) + " fit_seconds=" + num(r.seconds, 3)};
}

Outcome criterion2() {
  int passing = 0;
  std::string detail;
  for (std::uint64_t seed : {7, 11, 13, 17, 19}) {
    const auto& r = run_for(seed);
    const double rho = r.spearman.value_or(-2.0);
    passing += r.spearman && rho >= kSpearmanMin;
    detail += "seed" + std::to_string(seed) + "=" + num(rho) + " ";
  }
  return {passing >= kSpearmanSeedsRequired, detail + "(" + std::to_string(passing) + "/5, minmax_global)"};
}

// --- 3 ------------------------------------------------------------------------

Outcome criterion3() {
  std::mt19937_64 rng(303);
  const double betas[] = {0.0, 1.0, 5.0};
  const double lambdas[] = {0.0, 0.01, 0.1};
  int violations = 0;
  double worst = 0.0;
  std::size_t steps = 0;
  for (int inst = 0; inst < 50; ++inst) {
    const auto m = 2 + static_cast<Eigen::Index>(rng() % 49);
    const auto n = 2 + static_cast<Eigen::Index>(rng() % 19);
    const auto k = 2 + static_cast<Eigen::Index>(rng() % 14);
    const Matrix x = uniform(m, n, rng), w = uniform(m, n, rng), q = random_q(m, k, rng);
    McfConfig c;
    c.latent_dim = 1 + static_cast<int>(rng() % 8);
    c.beta = betas[inst % 3];
    const double lam = lambdas[(inst / 3) % 3];
    c.lambda_e = c.lambda_u = c.lambda_v = lam;
    c.max_iters = 500;
    c.tol = 1e-300;
    c.seed = static_cast<std::uint64_t>(inst);
    const auto fit = cdm::fit({x, w, q}, c);
    const auto& tr = fit.objective_trace;
    for (std::size_t t = 1; t < tr.size(); ++t) {
      ++steps;
      const double rise = tr[t] - tr[t - 1];
      worst = std::max(worst, rise);
      violations += rise > kMonotoneSlack;
    }
  }
  return {violations == 0, std::to_string(steps) + " steps, violations=" + std::to_string(violations) +
                               " max_rise=" + num(worst, 3)};
}

// --- 4 ------------------------------------------------------------------------

Matrix& factor_of(FactorSet& f, int which) { return which == 0 ? f.E : which == 1 ? f.U : f.V; }

Outcome criterion4() {
  std::mt19937_64 rng(404);
  int checked = 0, failed = 0;
  double worst = 0.0;
  for (int which = 0; which < 3; ++which) {
    for (int point = 0; point < 10; ++point) {
      const Eigen::Index m = 7, n = 5, k = 4;
      McfConfig c;
      c.latent_dim = 3;
      c.beta = 0.5 + static_cast<double>(point % 3);
      c.lambda_e = 0.01 * point;
      c.lambda_u = 0.02;
      c.lambda_v = 0.05;
      const Matrix x = uniform(m, n, rng), w = uniform(m, n, rng), q = random_q(m, k, rng);
      const McfProblem p{x, w, q};
      FactorSet f{uniform(m, 3, rng, 0.05, 1.5), uniform(3, n, rng, 0.05, 1.5), uniform(3, k, rng, 0.05, 1.5)};
      auto grad = objective_gradient(f, p, c);
      const Matrix& g = factor_of(grad, which);
      Matrix& target = factor_of(f, which);
      for (Eigen::Index i = 0; i < target.size(); ++i) {
        const double orig = target.data()[i];
        target.data()[i] = orig + kFdStep;
        const double up = objective(f, p, c);
        target.data()[i] = orig - kFdStep;
        const double down = objective(f, p, c);
        target.data()[i] = orig;
        const double fd = (up - down) / (2 * kFdStep);
        const double rel = std::abs(fd - g.data()[i]) / std::max({std::abs(fd), std::abs(g.data()[i]), 1e-8});
        worst = std::max(worst, rel);
        ++checked;
        failed += rel > kGradRelTol;
      }
    }
  }
  return {failed == 0, std::to_string(checked) + " entries over 30 points, failures=" + std::to_string(failed) +
                           " max_rel=" + num(worst, 3)};
}

// --- 5 ------------------------------------------------------------------------

Outcome criterion5() {
  std::mt19937_64 rng(505);
  double worst = 0.0;
  bool defined_match = true;
  for (int rep = 0; rep < 100; ++rep) {
    const std::size_t n = 2 + rng() % 300;
    const int levels = 1 + static_cast<int>(rng() % 10);
    std::vector<double> s(n);
    std::vector<int> y(n);
    for (std::size_t i = 0; i < n; ++i) {
      s[i] = static_cast<double>(rng() % static_cast<unsigned>(levels)) / levels;
      y[i] = static_cast<int>(rng() % 2);
    }
    y[0] = 1;
    y[1] = 0;
    const auto fast = auc(s, y), slow = auc_pairwise(s, y);
    defined_match = defined_match && fast.has_value() == slow.has_value();
    if (fast && slow) worst = std::max(worst, std::abs(*fast - *slow));
  }
  const std::vector<double> hs = {0.5, 0.5, 0.2};
  const std::vector<int> hy = {1, 0, 0};
  const double hand = auc(hs, hy).value_or(-1.0);
  return {defined_match && worst <= kAucOracleTol && hand == 0.75,
          "max_diff=" + num(worst, 3) + " tie_case=" + num(hand)};
}

// --- 6 ------------------------------------------------------------------------

// Every single, pair and the triple over three concepts, cycled.
Matrix dina_design_q(int m) {
  const int patterns[7][3] = {{1, 0, 0}, {0, 1, 0}, {0, 0, 1}, {1, 1, 0}, {1, 0, 1}, {0, 1, 1}, {1, 1, 1}};
  Matrix q(m, 3);
  for (int i = 0; i < m; ++i)
    for (int k = 0; k < 3; ++k) q(i, k) = patterns[i % 7][k];
  return q;
}

double map_match(const dina::FitResult& fit, const dina::Simulation& sim) {
  std::size_t hit = 0;
  for (std::size_t j = 0; j < sim.profiles.size(); ++j) hit += fit.map_profiles[j] == sim.profiles[j];
  return static_cast<double>(hit) / static_cast<double>(sim.profiles.size());
}

Outcome criterion6() {
  const int m = 30, n = 200, reps = 100;
  const Matrix q = dina_design_q(m);
  const auto truth = dina::Params::uniform(m, 0.1, 0.1);
  std::vector<double> slip_err(m), guess_err(m);
  double match = 0.0, worst_single = 0.0;
  for (int rep = 0; rep < reps; ++rep) {
    const auto sim = dina::simulate(q, truth, n, 6000 + static_cast<std::uint64_t>(rep));
    const auto fit = dina::em_fit(sim.x, q);
    for (std::size_t i = 0; i < static_cast<std::size_t>(m); ++i) {
      const double es = std::abs(fit.params.slip[i] - 0.1), eg = std::abs(fit.params.guess[i] - 0.1);
      slip_err[i] += es / reps;
      guess_err[i] += eg / reps;
      worst_single = std::max({worst_single, es, eg});
    }
    match += map_match(fit, sim) / reps;
  }
  const double worst_mean = std::max(*std::max_element(slip_err.begin(), slip_err.end()),
                                     *std::max_element(guess_err.begin(), guess_err.end()));

  double noiseless = 1.0;
  for (int rep = 0; rep < 10; ++rep) {
    const auto sim = dina::simulate(q, dina::Params::uniform(m, 0.0, 0.0), n, 6500 + static_cast<std::uint64_t>(rep));
    noiseless = std::min(noiseless, map_match(dina::em_fit(sim.x, q), sim));
  }
  const bool ok = worst_mean <= kDinaParamTol && match >= kDinaMapMin && noiseless == 1.0;
  return {ok, "max_mean_abs_param_err=" + num(worst_mean, 3) + " (worst single rep " + num(worst_single, 3) +
                  ") map_match=" + num(match) + " noiseless=" + num(noiseless)};
}

// --- 7 ------------------------------------------------------------------------

Outcome criterion7() {
  const int k = 3, per_concept = 10, n = 40;
  const int m = k * per_concept;
  Matrix q = Matrix::Zero(m, k);
  for (int i = 0; i < m; ++i) q(i, i / per_concept) = 1.0;
  const auto sim = dina::simulate(q, dina::Params::uniform(m, 0.0, 0.0), n, 707);
  const auto dina_fit = dina::em_fit(sim.x, q);

  const Matrix w = Matrix::Ones(m, n);
  const auto fit = multistart_fit({sim.x, w, q}, planted_config(k), 8);
  const auto f = mastery(fit.factors, Normalization::clip);
  std::size_t agree = 0;
  for (int j = 0; j < n; ++j)
    for (int c = 0; c < k; ++c)
      agree += (f.prob(j, c) > 0.5) == (dina_fit.map_profiles[static_cast<std::size_t>(j)][static_cast<std::size_t>(c)] == 1);
  const double rate = static_cast<double>(agree) / (n * k);
  return {rate >= kCrossAgreeMin, "cell_agreement=" + num(rate) + " over " + std::to_string(n * k) + " cells"};
}

// --- 8 ------------------------------------------------------------------------

Outcome criterion8() {
  Matrix p = Matrix::Constant(5, 70, 0.5);
  p.row(0).head(40).setConstant(0.95);
  p.row(1).head(25).setConstant(0.91);
  p.row(2).head(25).setConstant(0.99);
  p.row(3).head(3).setConstant(1.0);
  p.row(4).setConstant(0.9);
  const auto r = concept_counts(p, {"m40", "m25b", "m25a", "m3", "m0"});
  std::vector<int> counts;
  std::vector<std::string> order;
  for (const auto& row : r.rows) {
    counts.push_back(row.mastered);
    order.push_back(row.model_id);
  }
  const bool counts_ok = counts == std::vector<int>{40, 25, 25, 3, 0};
  const bool order_ok = order == std::vector<std::string>{"m40", "m25a", "m25b", "m3", "m0"};
  const bool boundary_ok = concept_counts(Matrix::Constant(1, 70, 0.9), {"x"}).rows[0].mastered == 0;
  std::string got;
  for (int c : counts) got += std::to_string(c) + " ";
  return {counts_ok && order_ok && boundary_ok, "counts=" + got + "boundary_0.9=" + (boundary_ok ? "0" : "nonzero")};
}

// --- 9 ------------------------------------------------------------------------

AnnotationTable int_table(const std::vector<std::vector<int>>& rows, const std::vector<std::string>& names) {
  AnnotationTable t;
  for (const auto& r : rows) {
    std::vector<std::optional<Coding>> cells;
    for (int v : r) cells.push_back(Coding{names[static_cast<std::size_t>(v)]});
    t.push_back(std::move(cells));
  }
  return t;
}

Outcome criterion9() {
  const std::vector<std::string> plain = {"0", "1", "2", "3"}, renamed = {"delta", "alpha", "gamma", "beta"};
  std::vector<std::vector<int>> perfect;
  for (int u = 0; u < 50; ++u) perfect.push_back({u % 4, u % 4, u % 4});
  const double a_perfect = krippendorff_alpha(int_table(perfect, plain), AgreementDistance::nominal).alpha;

  std::mt19937_64 rng(909);
  std::vector<std::vector<int>> chance(10000);
  for (auto& r : chance) r = {static_cast<int>(rng() % 2), static_cast<int>(rng() % 2)};
  const double a_chance = krippendorff_alpha(int_table(chance, plain), AgreementDistance::nominal).alpha;

  std::vector<std::vector<int>> noisy(200);
  for (auto& r : noisy) {
    const int truth = static_cast<int>(rng() % 4);
    for (int c = 0; c < 3; ++c) r.push_back(rng() % 4 == 0 ? static_cast<int>(rng() % 4) : truth);
  }
  const double a1 = krippendorff_alpha(int_table(noisy, plain), AgreementDistance::nominal).alpha;
  const double a2 = krippendorff_alpha(int_table(noisy, renamed), AgreementDistance::nominal).alpha;

  const bool ok = a_perfect == 1.0 && std::abs(a_chance) <= kChanceAlphaMax && a1 == a2;
  return {ok, "perfect=" + num(a_perfect) + " chance=" + num(a_chance, 3) + " relabel " + num(a1, 6) +
                  (a1 == a2 ? " == " : " != ") + num(a2, 6)};
}

// --- 10 -----------------------------------------------------------------------

int run_cli(const std::string& args) {
  const std::string cmd = std::string(CDM_BIN) + " " + args + " >/dev/null 2>&1";
  const int rc = std::system(cmd.c_str());
  return WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
}

void write_grade_inputs(const fs::path& dir) {
  fs::create_directories(dir / "logs");
  std::ofstream(dir / "bank.json")
      << R"({"format_version":1,"concepts":[{"id":"c1","label":"one"},{"id":"c2","label":"two"}],"items":[)"
      << R"({"id":"q1","prompt":"p","answer_key":"A","concepts":["c1"]},)"
      << R"({"id":"q2","prompt":"p","answer_key":"B","concepts":["c2"]},)"
      << R"({"id":"q3","prompt":"p","answer_key":"C","concepts":["c1","c2"]}]})";
  const char* outputs[] = {"A", "(B)", "answer: D", "C"};
  for (int j = 0; j < 2; ++j) {
    std::ofstream log(dir / "logs" / ("m" + std::to_string(j) + ".jsonl"));
    for (int i = 1; i <= 3; ++i)
      for (int a = 0; a < 2; ++a)
        log << R"({"model":"m)" << j << R"(","item":"q)" << i << R"(","attempt":)" << a << R"(,"output":")"
            << outputs[(i + j + a) % 4] << "\"}\n";
  }
  std::ofstream(dir / "ann.csv") << "unit,c1,c2,c3\nu1,a,a,b\nu2,b,b,b\nu3,a;b,a,\nu4,c,c,c\nu5,a,b,c\n";
}

std::map<std::string, std::string> digests(const fs::path& root) {
  std::map<std::string, std::string> out;
  for (const auto& e : fs::recursive_directory_iterator(root))
    if (e.is_regular_file() && e.path().filename() != "manifest.json")
      out[fs::relative(e.path(), root).string()] = sha256_file(e.path());
  return out;
}

Outcome criterion10() {
  const fs::path base = fs::temp_directory_path() / "cdmkit_acceptance_repro";
  fs::remove_all(base);
  write_grade_inputs(base / "inputs");
  const std::string in = (base / "inputs").string();
  std::map<std::string, std::string> first;
  bool commands_ok = true;
  for (const char* tag : {"run1", "run2"}) {
    const std::string o = (base / tag).string();
    const std::vector<std::string> cmds = {
        "simulate --m 30 --n 6 --k 8 --t 3 --seed 21 --out " + o + "/sim",
        "grade --bank " + in + "/bank.json --logs '" + in + "/logs/*.jsonl' --repeats 2 --out " + o + "/grade",
        "fit --in " + o + "/sim --t 3 --starts 2 --max-iters 200 --seed 4 --truth " + o + "/sim/truth.json --out " + o +
            "/fit",
        "diagnose --mastery " + o + "/fit/mastery.json --x " + o + "/sim/X.csv --clusters 2 --out " + o + "/diag",
        "agreement --annotations " + in + "/ann.csv --distance jaccard --out " + o + "/agree",
        "sweep --in " + o + "/sim --t-grid 2,3 --beta-grid 0,1 --max-iters 50 --out " + o + "/sweep",
        "dina --x " + o + "/sim/X.csv --q " + o + "/sim/Q.csv --max-iters 50 --out " + o + "/dina",
    };
    for (const auto& c : cmds) commands_ok = commands_ok && run_cli(c) == 0;
  }
  const auto a = digests(base / "run1"), b = digests(base / "run2");
  std::size_t differing = 0;
  for (const auto& [name, hash] : a) differing += !b.count(name) || b.at(name) != hash;
  differing += b.size() > a.size() ? b.size() - a.size() : 0;
  fs::remove_all(base);
  return {commands_ok && differing == 0 && !a.empty(),
          "7 commands x2, " + std::to_string(a.size()) + " files compared, differing=" + std::to_string(differing) +
              (commands_ok ? "" : " (a command failed)")};
}

}  // namespace

// With no arguments every criterion runs; otherwise only the listed numbers.
int main(int argc, char** argv) {
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria = {
      {"solver recovery", criterion1},   {"mastery recovery", criterion2}, {"objective monotonicity", criterion3},
      {"gradient check", criterion4},    {"AUC oracle", criterion5},       {"DINA oracle", criterion6},
      {"MCF vs DINA mastery", criterion7}, {"concept-count semantics", criterion8},
      {"agreement metric", criterion9},  {"reproducibility", criterion10}};
  std::vector<bool> selected(criteria.size(), argc == 1);
  for (int a = 1; a < argc; ++a) {
    const int n = std::atoi(argv[a]);
    if (n < 1 || n > static_cast<int>(criteria.size())) {
      std::fprintf(stderr, "unknown criterion: %s\n", argv[a]);
      return 2;
    }
    selected[static_cast<std::size_t>(n - 1)] = true;
  }
  int failures = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    if (!selected[i]) continue;
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    failures += !o.pass;
    std::printf("criterion %zu (%s): %s  %s\n", i + 1, criteria[i].first.c_str(), o.pass ? "PASS" : "FAIL",
                o.detail.c_str());
    std::fflush(stdout);
  }
  return failures == 0 ? 0 : 1;
}
