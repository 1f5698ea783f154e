#include <algorithm>
#include <map>
#include <numeric>

#include "cdmkit/error.hpp"
#include "cdmkit/metrics.hpp"
#include "support.hpp"

using namespace cdm;

namespace {

std::vector<double> v(std::initializer_list<double> xs) { return xs; }
std::vector<int> l(std::initializer_list<int> xs) { return xs; }

// Spearman from scratch: mid-ranks by counting, then Pearson.
std::optional<double> spearman_oracle(const std::vector<double>& a, const std::vector<double>& b) {
  auto ranks = [](const std::vector<double>& x) {
    std::vector<double> r(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) {
      double less = 0, equal = 0;
      for (double y : x) {
        less += y < x[i];
        equal += y == x[i];
      }
      r[i] = less + (equal + 1) / 2;
    }
    return r;
  };
  const auto ra = ranks(a), rb = ranks(b);
  const double n = static_cast<double>(a.size());
  const double ma = std::accumulate(ra.begin(), ra.end(), 0.0) / n;
  const double mb = std::accumulate(rb.begin(), rb.end(), 0.0) / n;
  double sab = 0, saa = 0, sbb = 0;
  for (std::size_t i = 0; i < ra.size(); ++i) {
    sab += (ra[i] - ma) * (rb[i] - mb);
    saa += (ra[i] - ma) * (ra[i] - ma);
    sbb += (rb[i] - mb) * (rb[i] - mb);
  }
  if (saa == 0 || sbb == 0) return std::nullopt;
  return sab / std::sqrt(saa * sbb);
}

Matrix ranking_fixture() {
  // Five models over 70 concepts: 40, 25, 25, 3 and 0 values above 0.9.
  Matrix p = Matrix::Constant(5, 70, 0.5);
  p.row(0).head(40).setConstant(0.95);
  p.row(1).head(25).setConstant(0.91);
  p.row(2).head(25).setConstant(0.99);
  p.row(3).head(3).setConstant(1.0);
  p.row(4).setConstant(0.9);
  return p;
}

}  // namespace

TEST_SUITE("metrics") {
  TEST_CASE("AUC hand-counted cases") {
    CHECK(*auc(v({0.9, 0.8, 0.3}), l({1, 1, 0})) == 1.0);
    CHECK(*auc(v({0.9, 0.8, 0.3}), l({1, 0, 1})) == 0.5);
    // Pairs: (0.5 vs 0.5) tie -> 0.5, (0.5 vs 0.2) -> 1; mean 0.75.
    CHECK(*auc(v({0.5, 0.5, 0.2}), l({1, 0, 0})) == 0.75);
    CHECK(*auc_pairwise(v({0.5, 0.5, 0.2}), l({1, 0, 0})) == 0.75);
    CHECK_FALSE(auc(v({0.1, 0.2}), l({1, 1})));
    CHECK_FALSE(auc_pairwise(v({0.1, 0.2}), l({0, 0})));
    CHECK_THROWS_AS(auc(v({0.1}), l({1, 0})), Error);
  }

  TEST_CASE("rank AUC equals the pairwise oracle with ties") {
    std::mt19937_64 rng(21);
    for (int rep = 0; rep < 100; ++rep) {
      const std::size_t n = 2 + rng() % 200;
      const int levels = 1 + static_cast<int>(rng() % 12);
      std::vector<double> s(n);
      std::vector<int> y(n);
      for (std::size_t i = 0; i < n; ++i) {
        s[i] = static_cast<double>(rng() % static_cast<unsigned>(levels)) / levels;
        y[i] = static_cast<int>(rng() % 2);
      }
      y[0] = 1;
      y[1] = 0;
      CHECK(std::abs(*auc(s, y) - *auc_pairwise(s, y)) <= 1e-12);
    }
  }

  TEST_CASE("mid ranks and Spearman") {
    CHECK(mid_ranks(v({3.0, 1.0, 3.0, 2.0})) == v({3.5, 1.0, 3.5, 2.0}));
    CHECK(*spearman(v({1, 2, 3}), v({10, 20, 30})) == doctest::Approx(1.0));
    CHECK(*spearman(v({1, 2, 3}), v({3, 2, 1})) == doctest::Approx(-1.0));
    CHECK_FALSE(spearman(v({1, 1, 1}), v({1, 2, 3})));
    std::mt19937_64 rng(22);
    for (int rep = 0; rep < 50; ++rep) {
      std::vector<double> a(30), b(30);
      for (auto& x : a) x = static_cast<double>(rng() % 7);
      for (auto& x : b) x = static_cast<double>(rng() % 5);
      const auto got = spearman(a, b);
      const auto want = spearman_oracle(a, b);
      REQUIRE(got.has_value() == want.has_value());
      if (got) CHECK(std::abs(*got - *want) <= 1e-12);
    }
  }

  TEST_CASE("reconstruction: perfect case") {
    Matrix x(2, 3);
    x << 1, 0, 1, 0, 1, 1;
    const auto r = reconstruction_metrics(x, x, Matrix::Ones(2, 3));
    CHECK(r.accuracy == 1.0);
    CHECK(*r.auc == 1.0);
    CHECK(r.rmse == 0.0);
    CHECK(r.n_cells == 6);
  }

  TEST_CASE("reconstruction: weights, thresholds and undefined AUC") {
    Matrix x(1, 4), xh(1, 4), w(1, 4);
    x << 1.0, 0.0, 0.5, 0.2;
    xh << 0.6, 0.7, 0.5, 0.1;
    w << 1, 1, 1, 0;
    const auto r = reconstruction_metrics(xh, x, w);
    CHECK(r.n_cells == 3);
    // Labels 1,0,1 (0.5 rounds up); predictions 1,1,1. Both positives score
    // below the negative.
    CHECK(r.accuracy == doctest::Approx(2.0 / 3.0));
    CHECK(*r.auc == 0.0);
    CHECK(r.rmse == doctest::Approx(std::sqrt((0.16 + 0.49 + 0.0) / 3.0)));

    const auto flat = reconstruction_metrics(Matrix::Constant(2, 2, 0.3), Matrix::Ones(2, 2), Matrix::Ones(2, 2));
    CHECK_FALSE(flat.auc);
    CHECK(flat.warnings.size() == 1);
    CHECK(to_json(flat).find("\"auc\": null") != std::string::npos);
    CHECK_THROWS_AS(reconstruction_metrics(Matrix::Ones(2, 2), Matrix::Ones(2, 3), Matrix::Ones(2, 3)), Error);
  }

  TEST_CASE("reconstruction properties") {
    std::mt19937_64 rng(23);
    for (int rep = 0; rep < 20; ++rep) {
      const Matrix x = test::random_binary(8, 5, rng);
      const Matrix xh = test::random_matrix(8, 5, rng);
      const Matrix w = Matrix::Ones(8, 5);
      const auto r = reconstruction_metrics(xh, x, w);
      double errors = 0;
      for (Eigen::Index i = 0; i < x.size(); ++i) errors += (xh.data()[i] >= 0.5) != (x.data()[i] >= 0.5);
      CHECK(r.accuracy + errors / 40.0 == doctest::Approx(1.0).epsilon(1e-15));

      Eigen::PermutationMatrix<Eigen::Dynamic> pr(8), pc(5);
      pr.setIdentity();
      pc.setIdentity();
      std::shuffle(pr.indices().data(), pr.indices().data() + 8, rng);
      std::shuffle(pc.indices().data(), pc.indices().data() + 5, rng);
      const Matrix xp = pr * x * pc, xhp = pr * xh * pc;
      CHECK(reconstruction_metrics(xhp, xp, w).rmse == doctest::Approx(r.rmse).epsilon(1e-14));
    }
  }

  TEST_CASE("concept counts: saturation and boundary") {
    const auto ids = std::vector<std::string>{"m"};
    CHECK(concept_counts(Matrix::Ones(1, 70), ids).rows[0].mastered == 70);
    CHECK(concept_counts(Matrix::Constant(1, 70, 0.9), ids).rows[0].mastered == 0);
    CHECK(concept_counts(Matrix::Ones(1, 70), ids, 1.0).rows[0].mastered == 0);
  }

  TEST_CASE("concept counts rank models by mastered concepts") {
    const std::vector<std::string> ids = {"glm", "b", "a", "c", "falcon"};
    const auto r = concept_counts(ranking_fixture(), ids);
    REQUIRE(r.rows.size() == 5);
    std::vector<std::string> order;
    for (const auto& row : r.rows) order.push_back(row.model_id);
    // 25 vs 25 is broken by mean_score: "a" (0.99s) before "b" (0.91s).
    CHECK(order == std::vector<std::string>{"glm", "a", "b", "c", "falcon"});
    CHECK(r.rows.front().mastered == 40);
    CHECK(r.rows.back().mastered == 0);
    CHECK(r.rows.front().total == 70);
    const auto table = render_table(r);
    CHECK(table.find("40/70") != std::string::npos);
    CHECK(table.find("0/70") != std::string::npos);
    CHECK(table.find("Con") != std::string::npos);
    CHECK(to_csv(r).rfind("rank,model_id,mastered,total", 0) == 0);
  }

  TEST_CASE("concept count ties fall back to model id") {
    const auto r = concept_counts(Matrix::Constant(3, 4, 0.95), {"z", "x", "y"});
    CHECK(r.rows[0].model_id == "x");
    CHECK(r.rows[2].model_id == "z");
  }

  TEST_CASE("concept counts never grow with the threshold") {
    std::mt19937_64 rng(24);
    const Matrix p = test::random_matrix(6, 20, rng);
    const std::vector<std::string> ids = {"a", "b", "c", "d", "e", "f"};
    std::map<std::string, int> prev;
    for (double t = 0.0; t <= 1.0; t += 0.05) {
      for (const auto& row : concept_counts(p, ids, t).rows) {
        if (prev.count(row.model_id)) CHECK(row.mastered <= prev[row.model_id]);
        prev[row.model_id] = row.mastered;
      }
    }
  }

  TEST_CASE("observed scores") {
    auto r = concept_counts(Matrix::Constant(2, 3, 0.95), {"m0", "m1"});
    Matrix x(2, 2), w(2, 2);
    x << 0.8, 0.2, 0.4, 0.6;
    w << 1, 1, 1, 0;
    attach_observed_scores(r, {"m0", "m1"}, x, w);
    const auto& m0 = r.rows[0].model_id == "m0" ? r.rows[0] : r.rows[1];
    const auto& m1 = r.rows[0].model_id == "m1" ? r.rows[0] : r.rows[1];
    CHECK(*m0.observed_score == doctest::Approx(0.6));
    CHECK(*m0.observed_accuracy == doctest::Approx(0.5));
    CHECK(*m1.observed_score == doctest::Approx(0.2));
    CHECK(*m1.observed_accuracy == 0.0);
  }
}
