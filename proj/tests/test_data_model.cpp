#include <algorithm>
#include <fstream>
#include <sstream>

#include "cdmkit/data_model.hpp"
#include "cdmkit/error.hpp"
#include "support.hpp"

using namespace cdm;

namespace {

ConceptCatalog catalog_of(int k, const std::string& prefix = "F") {
  std::vector<Concept> cs;
  for (int i = 1; i <= k; ++i) cs.push_back({prefix + std::to_string(i), "concept " + std::to_string(i)});
  return ConceptCatalog(std::move(cs));
}

// 3 single-tag items per concept, items grouped by concept.
ItemBank full_size_bank() {
  auto cat = catalog_of(70);
  std::vector<Item> items;
  for (int k = 1; k <= 70; ++k)
    for (int r = 0; r < 3; ++r)
      items.push_back({"q" + std::to_string(items.size()), "prompt", "B", {"F" + std::to_string(k)}});
  return ItemBank(std::move(cat), std::move(items));
}

ErrorKind kind_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.kind();
  }
  FAIL("expected an error");
  return ErrorKind::invalid_argument;
}

std::string message_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.what();
  }
  return {};
}

ResponseLog log_for(const std::string& model, const std::string& item, int attempts, int correct, int first = 0) {
  ResponseLog log{model, {}};
  for (int a = 0; a < attempts; ++a)
    log.entries.push_back({item, first + a, a < correct ? "答案：B" : "答案：C"});
  return log;
}

}  // namespace

TEST_SUITE("data-model") {
  TEST_CASE("full-size bank: 210 items over 70 concepts") {
    const auto bank = full_size_bank();
    CHECK(bank.size() == 210);
    CHECK(bank.catalog().size() == 70);
    const auto q = qmatrix(bank);
    CHECK(q.rows() == 210);
    CHECK(q.cols() == 70);
    for (Eigen::Index k = 0; k < q.cols(); ++k) CHECK(q.col(k).sum() == 3.0);
    for (Eigen::Index i = 0; i < q.rows(); ++i) CHECK(q.row(i).sum() >= 1.0);
    CHECK(bank.orphan_concepts().empty());
  }

  TEST_CASE("bank validation errors name the offender") {
    CHECK(kind_of([] { ItemBank(catalog_of(3), {}); }) == ErrorKind::validation);
    CHECK(message_of([] { ItemBank(catalog_of(3), {}); }).find("no items") != std::string::npos);

    const auto unknown = [] { ItemBank(catalog_of(5), {{"i1", "p", "A", {"F1", "F99"}}}); };
    CHECK(kind_of(unknown) == ErrorKind::validation);
    CHECK(message_of(unknown).find("F99") != std::string::npos);

    const auto dup = [] { ItemBank(catalog_of(2), {{"i1", "p", "A", {"F1"}}, {"i1", "p", "B", {"F2"}}}); };
    CHECK(kind_of(dup) == ErrorKind::validation);
    CHECK(message_of(dup).find("i1") != std::string::npos);

    const auto empty_key = [] { ItemBank(catalog_of(2), {{"i7", "p", "   ", {"F1"}}}); };
    CHECK(kind_of(empty_key) == ErrorKind::validation);
    CHECK(message_of(empty_key).find("i7") != std::string::npos);

    CHECK(kind_of([] { ItemBank(catalog_of(2), {{"i1", "p", "A", {}}}); }) == ErrorKind::validation);
    CHECK(kind_of([] { ConceptCatalog(std::vector<Concept>{{"a", ""}, {"a", ""}}); }) == ErrorKind::validation);
    CHECK(kind_of([] { ConceptCatalog(std::vector<Concept>{{"", "x"}}); }) == ErrorKind::validation);
  }

  TEST_CASE("orphan concepts are reported, not rejected") {
    ItemBank bank(catalog_of(3), {{"i1", "p", "A", {"F2"}}});
    CHECK(bank.orphan_concepts() == std::vector<std::string>{"F1", "F3"});
  }

  TEST_CASE("qmatrix rows encode tags") {
    ItemBank bank(catalog_of(5), {{"a", "p", "A", {"F3"}}, {"b", "p", "A", {"F4", "F1", "F1"}}});
    const auto q = qmatrix(bank);
    CHECK(q.row(0) == (Eigen::RowVectorXd(5) << 0, 0, 1, 0, 0).finished());
    CHECK(q.row(1) == (Eigen::RowVectorXd(5) << 1, 0, 0, 1, 0).finished());
    CHECK(bank.items()[1].concept_tags == std::vector<std::string>{"F1", "F4"});
    CHECK(qmatrix(bank) == q);
  }

  TEST_CASE("item bank JSON and CSV round trips") {
    test::TempDir dir("bank");
    ItemBank bank(catalog_of(4), {{"a", "What, \"quoted\"?", "b", {"F2", "F4"}},
                                  {"b", "line\nbreak", "C D", {"F1"}},
                                  {"c", "plain", "A", {"F3"}}});
    save_item_bank_json(dir / "bank.json", bank);
    CHECK(load_item_bank(dir / "bank.json", BankFormat::json) == bank);
    save_item_bank_csv(dir / "items.csv", dir / "concepts.csv", bank);
    CHECK(load_item_bank(dir / "items.csv", BankFormat::csv) == bank);
    CHECK(load_item_bank(dir / "items.csv", BankFormat::csv, dir / "concepts.csv") == bank);
  }

  TEST_CASE("bank files: version gate and parse errors") {
    test::TempDir dir("bankv");
    write_text_file(dir / "future.json",
                    R"({"format_version":2,"concepts":[{"id":"F1","label":""}],"items":[]})");
    CHECK(kind_of([&] { load_item_bank(dir / "future.json", BankFormat::json); }) == ErrorKind::unsupported);
    write_text_file(dir / "nover.json", R"({"concepts":[],"items":[]})");
    CHECK(kind_of([&] { load_item_bank(dir / "nover.json", BankFormat::json); }) == ErrorKind::parse);
    write_text_file(dir / "bad.json", "{not json");
    CHECK(kind_of([&] { load_item_bank(dir / "bad.json", BankFormat::json); }) == ErrorKind::parse);
    CHECK(kind_of([&] { load_item_bank(dir / "missing.json", BankFormat::json); }) == ErrorKind::io);
  }

  TEST_CASE("grading examples") {
    const auto rule = GradingRule::choice_letter();
    CHECK(grade("答案：B", "B", rule) == 1);
    CHECK(grade("I think the answer is C", "B", rule) == 0);
    CHECK(grade("B。理由是……", "B", rule) == 1);
  }

  TEST_CASE("grading corpus") {
    std::ifstream in(std::filesystem::path(CDMKIT_FIXTURES) / "grading_corpus.tsv");
    REQUIRE(in);
    std::string line;
    std::getline(in, line);
    int rows = 0;
    const auto rule = GradingRule::choice_letter();
    while (std::getline(in, line)) {
      std::istringstream ls(line);
      std::string raw, key, expected;
      std::getline(ls, raw, '\t');
      std::getline(ls, key, '\t');
      std::getline(ls, expected, '\t');
      CAPTURE(raw);
      CHECK(grade(raw, key, rule) == std::stoi(expected));
      ++rows;
    }
    CHECK(rows >= 15);
  }

  TEST_CASE("choice extraction details") {
    CHECK(extract_choice_letters("c, a") == std::optional<std::string>("AC"));
    CHECK(extract_choice_letters("ABBA") == std::nullopt);
    CHECK(extract_choice_letters("xyz") == std::nullopt);
    CHECK(extract_choice_letters("Answer: D") == std::optional<std::string>("D"));
    Warnings w;
    CHECK(grade("no letter here", "A", GradingRule::choice_letter(), &w) == 0);
    CHECK(w.size() == 1);
  }

  TEST_CASE("exact and custom rules") {
    CHECK(grade("  hello   world ", "HELLO WORLD", GradingRule::exact_match()) == 1);
    CHECK(grade("hello", "world", GradingRule::exact_match()) == 0);
    GradingRule digits("digits", [](std::string_view s) -> std::optional<std::string> {
      std::string d;
      for (char c : s)
        if (c >= '0' && c <= '9') d += c;
      if (d.empty()) return std::nullopt;
      return d;
    }, [](std::string_view s) { return std::optional<std::string>(std::string(s)); });
    CHECK(grade("the result is 42.", "42", digits) == 1);
    Warnings w;
    CHECK(grade("none", "42", digits, &w) == 0);
    CHECK(!w.empty());
  }

  TEST_CASE("aggregate arithmetic") {
    ItemBank bank(catalog_of(1), {{"q1", "p", "B", {"F1"}}, {"q2", "p", "B", {"F1"}}});
    const auto r = aggregate({log_for("m", "q1", 10, 7)}, bank, GradingRule::choice_letter(), 10).matrix;
    CHECK(r.scores(0, 0) == doctest::Approx(0.7).epsilon(1e-15));
    CHECK(r.weights(0, 0) == 1.0);
    CHECK(r.scores(1, 0) == 0.0);
    CHECK(r.weights(1, 0) == 0.0);

    const auto half = aggregate({log_for("m", "q1", 5, 5, 3)}, bank, GradingRule::choice_letter(), 10).matrix;
    CHECK(half.scores(0, 0) == 1.0);
    CHECK(half.weights(0, 0) == 0.5);
  }

  TEST_CASE("aggregate errors") {
    ItemBank bank(catalog_of(1), {{"q1", "p", "B", {"F1"}}});
    const auto rule = GradingRule::choice_letter();
    CHECK(kind_of([&] { aggregate({}, bank, rule); }) != ErrorKind::io);
    ResponseLog bad{"m", {{"zz", 0, "B"}, {"q1", 0, "B"}, {"aa", 1, "B"}}};
    const auto msg = message_of([&] { aggregate({bad}, bank, rule); });
    CHECK(msg.find("aa") != std::string::npos);
    CHECK(msg.find("zz") != std::string::npos);
    ResponseLog dup{"m", {{"q1", 0, "B"}, {"q1", 0, "C"}}};
    CHECK(kind_of([&] { aggregate({dup}, bank, rule); }) == ErrorKind::validation);
    ResponseLog over{"m", {{"q1", 10, "B"}}};
    CHECK(kind_of([&] { aggregate({over}, bank, rule, 10); }) == ErrorKind::validation);
  }

  TEST_CASE("aggregate is invariant to log and attempt order") {
    ItemBank bank(catalog_of(2), {{"q1", "p", "B", {"F1"}}, {"q2", "p", "A", {"F2"}}});
    std::vector<ResponseLog> logs = {log_for("m2", "q1", 10, 3), log_for("m1", "q1", 4, 1), log_for("m1", "q2", 6, 0, 4)};
    const auto base = aggregate(logs, bank, GradingRule::choice_letter(), 10).matrix;
    std::mt19937_64 rng(3);
    for (int rep = 0; rep < 5; ++rep) {
      auto shuffled = logs;
      std::shuffle(shuffled.begin(), shuffled.end(), rng);
      for (auto& l : shuffled) std::shuffle(l.entries.begin(), l.entries.end(), rng);
      const auto r = aggregate(shuffled, bank, GradingRule::choice_letter(), 10).matrix;
      CHECK(r.model_ids == base.model_ids);
      CHECK(r.scores == base.scores);
      CHECK(r.weights == base.weights);
    }
  }

  TEST_CASE("complete logs put X on the 1/R grid") {
    const auto bank = full_size_bank();
    std::mt19937_64 rng(11);
    std::vector<ResponseLog> logs;
    for (int j = 0; j < 4; ++j) {
      ResponseLog log{"model" + std::to_string(j), {}};
      for (const auto& item : bank.items())
        for (int a = 0; a < 10; ++a) log.entries.push_back({item.id, a, rng() % 2 ? "B" : "A"});
      logs.push_back(std::move(log));
    }
    const auto r = aggregate(logs, bank, GradingRule::choice_letter(), 10).matrix;
    CHECK(r.scores.rows() == 210);
    CHECK(r.weights.minCoeff() == 1.0);
    for (Eigen::Index i = 0; i < r.scores.size(); ++i) {
      const double v = r.scores.data()[i] * 10;
      CHECK(std::abs(v - std::round(v)) < 1e-12);
    }
  }

  TEST_CASE("response logs and matrices round trip") {
    test::TempDir dir("rm");
    ItemBank bank(catalog_of(1), {{"q1", "p", "B", {"F1"}}, {"q2", "p", "B", {"F1"}}});
    std::vector<ResponseLog> logs = {log_for("m1", "q1", 3, 1), log_for("m2", "q2", 7, 6)};
    save_response_log_jsonl(dir / "logs.jsonl", logs);
    const auto loaded = load_response_logs({dir / "logs.jsonl"});
    const auto a = aggregate(logs, bank, GradingRule::choice_letter()).matrix;
    const auto b = aggregate(loaded, bank, GradingRule::choice_letter()).matrix;
    CHECK(a.scores == b.scores);

    save_response_matrix(dir / "X.csv", dir / "W.csv", a);
    const auto back = load_response_matrix(dir / "X.csv", dir / "W.csv");
    CHECK(back.item_ids == a.item_ids);
    CHECK(back.model_ids == a.model_ids);
    CHECK((back.scores - a.scores).cwiseAbs().maxCoeff() <= 1e-12);
    CHECK(back.weights == a.weights);
    const auto no_w = load_response_matrix(dir / "X.csv");
    CHECK(no_w.weights.minCoeff() == 1.0);
  }

  TEST_CASE("response matrix validation and binarize") {
    ResponseMatrix rm{{"i"}, {"m"}, Matrix::Constant(1, 1, 1.5), Matrix::Ones(1, 1)};
    CHECK(kind_of([&] { rm.validate(); }) == ErrorKind::validation);
    Matrix x(1, 3);
    x << 0.49, 0.5, 0.51;
    CHECK(binarize(x) == (Matrix(1, 3) << 0, 1, 1).finished());
  }

  TEST_CASE("malformed JSONL names the line") {
    test::TempDir dir("jsonl");
    write_text_file(dir / "a.jsonl", "{\"model\":\"m\",\"item\":\"q\",\"attempt\":0,\"output\":\"A\"}\n{oops}\n");
    const auto msg = message_of([&] { load_response_logs({dir / "a.jsonl"}); });
    CHECK(msg.find("2") != std::string::npos);
  }
}
