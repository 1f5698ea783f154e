#include "cdmkit/data_model.hpp"

#include <algorithm>
#include <map>
#include <set>
#include <sstream>
#include <unordered_map>
#include <unordered_set>

#include <json.hpp>

#include "csv.hpp"

namespace cdm {

using nlohmann::json;

namespace {

bool is_space(unsigned char c) { return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v'; }
bool is_ascii_letter(unsigned char c) { return (c >= 'A' && c <= 'Z') || (c >= 'a' && c <= 'z'); }

std::string join_names(const std::vector<std::string>& names) {
  std::string out;
  for (std::size_t i = 0; i < names.size(); ++i) {
    if (i) out += ", ";
    out += '"' + names[i] + '"';
  }
  return out;
}

std::vector<std::string> split_tags(std::string_view field) {
  std::vector<std::string> tags;
  std::string cur;
  auto flush = [&] {
    std::size_t b = 0, e = cur.size();
    while (b < e && is_space(static_cast<unsigned char>(cur[b]))) ++b;
    while (e > b && is_space(static_cast<unsigned char>(cur[e - 1]))) --e;
    if (e > b) tags.push_back(cur.substr(b, e - b));
    cur.clear();
  };
  for (char c : field) {
    if (c == ';') flush();
    else cur.push_back(c);
  }
  flush();
  return tags;
}

const json& field(const json& obj, const char* key, const std::string& where) {
  auto it = obj.find(key);
  if (it == obj.end()) fail(ErrorKind::parse, where + ": missing field \"" + key + "\"");
  return *it;
}

std::string string_field(const json& obj, const char* key, const std::string& where) {
  const auto& v = field(obj, key, where);
  if (!v.is_string()) fail(ErrorKind::parse, where + ": field \"" + std::string(key) + "\" must be a string");
  return v.get<std::string>();
}

void check_format_version(const json& doc, const std::string& where) {
  auto it = doc.find("format_version");
  if (it == doc.end() || !it->is_number_integer())
    fail(ErrorKind::parse, where + ": missing integer \"format_version\"");
  const int v = it->get<int>();
  if (v != kFormatVersion)
    fail(ErrorKind::unsupported, where + ": unsupported format_version " + std::to_string(v));
}

}  // namespace

// ---------------------------------------------------------------------------

ConceptCatalog::ConceptCatalog(std::vector<Concept> concepts) : concepts_(std::move(concepts)) {
  std::unordered_set<std::string> seen;
  for (std::size_t k = 0; k < concepts_.size(); ++k) {
    const auto& id = concepts_[k].id;
    if (id.empty()) fail(ErrorKind::validation, "concept #" + std::to_string(k) + " has an empty id");
    if (!seen.insert(id).second) fail(ErrorKind::validation, "duplicate concept id \"" + id + "\"");
  }
}

std::optional<std::size_t> ConceptCatalog::index_of(std::string_view id) const {
  for (std::size_t k = 0; k < concepts_.size(); ++k)
    if (concepts_[k].id == id) return k;
  return std::nullopt;
}

std::vector<std::string> ConceptCatalog::ids() const {
  std::vector<std::string> out;
  out.reserve(concepts_.size());
  for (const auto& c : concepts_) out.push_back(c.id);
  return out;
}

std::string normalize_answer(std::string_view raw) {
  std::string out;
  bool pending_space = false;
  for (char ch : raw) {
    const auto c = static_cast<unsigned char>(ch);
    if (is_space(c)) {
      pending_space = !out.empty();
      continue;
    }
    if (pending_space) out.push_back(' ');
    pending_space = false;
    out.push_back(c >= 'a' && c <= 'z' ? static_cast<char>(c - 'a' + 'A') : ch);
  }
  return out;
}

ItemBank::ItemBank(ConceptCatalog catalog, std::vector<Item> items)
    : catalog_(std::move(catalog)), items_(std::move(items)) {
  if (catalog_.size() == 0) fail(ErrorKind::validation, "no concepts");
  if (items_.empty()) fail(ErrorKind::validation, "no items");

  std::unordered_map<std::string, std::size_t> concept_index;
  for (std::size_t k = 0; k < catalog_.size(); ++k) concept_index.emplace(catalog_[k].id, k);

  std::unordered_set<std::string> seen;
  for (std::size_t i = 0; i < items_.size(); ++i) {
    auto& item = items_[i];
    const std::string where = item.id.empty() ? "item #" + std::to_string(i) : "item \"" + item.id + "\"";
    if (item.id.empty()) fail(ErrorKind::validation, where + " has an empty id");
    if (!seen.insert(item.id).second) fail(ErrorKind::validation, "duplicate item id \"" + item.id + "\"");
    item.answer_key = normalize_answer(item.answer_key);
    if (item.answer_key.empty()) fail(ErrorKind::validation, where + " has an empty answer key");
    if (item.concept_tags.empty()) fail(ErrorKind::validation, where + " has no concept tags");

    std::vector<std::string> unknown;
    std::set<std::size_t> idx;
    for (const auto& tag : item.concept_tags) {
      auto it = concept_index.find(tag);
      if (it == concept_index.end()) unknown.push_back(tag);
      else idx.insert(it->second);
    }
    if (!unknown.empty())
      fail(ErrorKind::validation, where + " references unknown concept(s) " + join_names(unknown));
    item.concept_tags.clear();
    for (auto k : idx) item.concept_tags.push_back(catalog_[k].id);
  }
}

std::optional<std::size_t> ItemBank::index_of(std::string_view item_id) const {
  for (std::size_t i = 0; i < items_.size(); ++i)
    if (items_[i].id == item_id) return i;
  return std::nullopt;
}

std::vector<std::string> ItemBank::item_ids() const {
  std::vector<std::string> out;
  out.reserve(items_.size());
  for (const auto& it : items_) out.push_back(it.id);
  return out;
}

std::vector<std::string> ItemBank::orphan_concepts() const {
  std::unordered_set<std::string> used;
  for (const auto& it : items_) used.insert(it.concept_tags.begin(), it.concept_tags.end());
  std::vector<std::string> out;
  for (const auto& c : catalog_.concepts())
    if (!used.count(c.id)) out.push_back(c.id);
  return out;
}

bool ItemBank::operator==(const ItemBank& o) const {
  if (catalog_.size() != o.catalog_.size() || items_.size() != o.items_.size()) return false;
  for (std::size_t k = 0; k < catalog_.size(); ++k)
    if (catalog_[k].id != o.catalog_[k].id || catalog_[k].label != o.catalog_[k].label) return false;
  for (std::size_t i = 0; i < items_.size(); ++i) {
    const auto &a = items_[i], &b = o.items_[i];
    if (a.id != b.id || a.prompt != b.prompt || a.answer_key != b.answer_key || a.concept_tags != b.concept_tags)
      return false;
  }
  return true;
}

// ---------------------------------------------------------------------------
// Bank I/O

namespace {

ItemBank parse_bank_json(const std::string& text, const std::string& where) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    fail(ErrorKind::parse, where + ": " + e.what());
  }
  if (!doc.is_object()) fail(ErrorKind::parse, where + ": top level must be an object");
  check_format_version(doc, where);

  const auto& jconcepts = field(doc, "concepts", where);
  const auto& jitems = field(doc, "items", where);
  if (!jconcepts.is_array() || !jitems.is_array())
    fail(ErrorKind::parse, where + ": \"concepts\" and \"items\" must be arrays");

  std::vector<Concept> concepts;
  for (std::size_t k = 0; k < jconcepts.size(); ++k) {
    const auto w = where + ": concepts[" + std::to_string(k) + "]";
    const auto& c = jconcepts[k];
    if (!c.is_object()) fail(ErrorKind::parse, w + " must be an object");
    concepts.push_back({string_field(c, "id", w), c.contains("label") ? string_field(c, "label", w) : ""});
  }

  std::vector<Item> items;
  for (std::size_t i = 0; i < jitems.size(); ++i) {
    const auto w = where + ": items[" + std::to_string(i) + "]";
    const auto& it = jitems[i];
    if (!it.is_object()) fail(ErrorKind::parse, w + " must be an object");
    Item item;
    item.id = string_field(it, "id", w);
    item.prompt = it.contains("prompt") ? string_field(it, "prompt", w) : "";
    item.answer_key = string_field(it, "answer_key", w);
    const auto& tags = field(it, "concepts", w);
    if (!tags.is_array()) fail(ErrorKind::parse, w + ": \"concepts\" must be an array");
    for (const auto& t : tags) {
      if (!t.is_string()) fail(ErrorKind::parse, w + ": concept tags must be strings");
      item.concept_tags.push_back(t.get<std::string>());
    }
    items.push_back(std::move(item));
  }
  return ItemBank(ConceptCatalog(std::move(concepts)), std::move(items));
}

std::vector<csv::Row> csv_body(const std::filesystem::path& path, const std::vector<std::string>& expected) {
  auto rows = csv::parse(read_text_file(path));
  if (rows.empty()) fail(ErrorKind::parse, path.string() + ": missing header row");
  auto header = rows.front();
  for (auto& h : header) h = normalize_answer(h);
  std::vector<std::string> want;
  for (const auto& e : expected) want.push_back(normalize_answer(e));
  if (header != want) {
    std::string msg = path.string() + ": expected header";
    for (const auto& e : expected) msg += " " + e;
    fail(ErrorKind::parse, msg);
  }
  rows.erase(rows.begin());
  for (std::size_t r = 0; r < rows.size(); ++r)
    if (rows[r].size() != expected.size())
      fail(ErrorKind::parse, path.string() + ": row " + std::to_string(r + 2) + " has " +
                                 std::to_string(rows[r].size()) + " fields, expected " +
                                 std::to_string(expected.size()));
  return rows;
}

}  // namespace

ItemBank load_item_bank(const std::filesystem::path& path, BankFormat format,
                        const std::optional<std::filesystem::path>& concepts_path) {
  if (!std::filesystem::exists(path)) fail(ErrorKind::io, "no such file: " + path.string());
  if (format == BankFormat::json) return parse_bank_json(read_text_file(path), path.string());

  const auto cpath = concepts_path.value_or(path.parent_path() / "concepts.csv");
  if (!std::filesystem::exists(cpath)) fail(ErrorKind::io, "no such file: " + cpath.string());
  std::vector<Concept> concepts;
  for (auto& row : csv_body(cpath, {"id", "label"})) concepts.push_back({row[0], row[1]});

  std::vector<Item> items;
  for (auto& row : csv_body(path, {"id", "prompt", "answer_key", "concepts"}))
    items.push_back({row[0], row[1], row[2], split_tags(row[3])});
  return ItemBank(ConceptCatalog(std::move(concepts)), std::move(items));
}

void save_item_bank_json(const std::filesystem::path& path, const ItemBank& bank) {
  json doc;
  doc["format_version"] = kFormatVersion;
  doc["concepts"] = json::array();
  for (const auto& c : bank.catalog().concepts()) doc["concepts"].push_back({{"id", c.id}, {"label", c.label}});
  doc["items"] = json::array();
  for (const auto& it : bank.items())
    doc["items"].push_back(
        {{"id", it.id}, {"prompt", it.prompt}, {"answer_key", it.answer_key}, {"concepts", it.concept_tags}});
  write_text_file(path, doc.dump(2) + "\n");
}

void save_item_bank_csv(const std::filesystem::path& items_path, const std::filesystem::path& concepts_path,
                        const ItemBank& bank) {
  std::string c = csv::join({"id", "label"}) + "\n";
  for (const auto& con : bank.catalog().concepts()) c += csv::join({con.id, con.label}) + "\n";
  write_text_file(concepts_path, c);

  std::string out = csv::join({"id", "prompt", "answer_key", "concepts"}) + "\n";
  for (const auto& it : bank.items()) {
    std::string tags;
    for (std::size_t t = 0; t < it.concept_tags.size(); ++t) tags += (t ? ";" : "") + it.concept_tags[t];
    out += csv::join({it.id, it.prompt, it.answer_key, tags}) + "\n";
  }
  write_text_file(items_path, out);
}

Matrix qmatrix(const ItemBank& bank) {
  const auto& cat = bank.catalog();
  std::unordered_map<std::string, Eigen::Index> index;
  for (std::size_t k = 0; k < cat.size(); ++k) index.emplace(cat[k].id, static_cast<Eigen::Index>(k));
  Matrix q = Matrix::Zero(static_cast<Eigen::Index>(bank.size()), static_cast<Eigen::Index>(cat.size()));
  for (std::size_t i = 0; i < bank.size(); ++i)
    for (const auto& tag : bank.items()[i].concept_tags) q(static_cast<Eigen::Index>(i), index.at(tag)) = 1.0;
  return q;
}

LabeledMatrix qmatrix_labeled(const ItemBank& bank) {
  return {"item_id", bank.item_ids(), bank.catalog().ids(), qmatrix(bank)};
}

// ---------------------------------------------------------------------------
// Grading

namespace {

// Separators allowed between the letters of a multi-select answer.
std::size_t separator_length(std::string_view s, std::size_t pos) {
  static constexpr std::string_view kMultiByte[] = {"\xE3\x80\x81" /* 、 */, "\xEF\xBC\x8C" /* ， */,
                                                    "\xEF\xBC\x9B" /* ； */};
  const char c = s[pos];
  if (c == ' ' || c == ',' || c == ';' || c == '/' || c == '&' || c == '+') return 1;
  for (auto sep : kMultiByte)
    if (s.substr(pos, sep.size()) == sep) return sep.size();
  return 0;
}

// A letter group is a maximal run of ASCII letters; it is a choice group if
// every letter is in A-D and none repeats.
std::optional<std::string> choice_group(std::string_view group) {
  std::string letters;
  for (char c : group) {
    if (c < 'A' || c > 'D' || letters.find(c) != std::string::npos) return std::nullopt;
    letters.push_back(c);
  }
  return letters;
}

}  // namespace

std::optional<std::string> extract_choice_letters(std::string_view raw) {
  std::string up(raw);
  for (auto& ch : up)
    if (ch >= 'a' && ch <= 'z') ch = static_cast<char>(ch - 'a' + 'A');

  const std::string_view s = up;
  std::size_t pos = 0;
  std::string answer;
  bool collecting = false;
  while (pos < s.size()) {
    if (is_ascii_letter(static_cast<unsigned char>(s[pos]))) {
      std::size_t end = pos;
      while (end < s.size() && is_ascii_letter(static_cast<unsigned char>(s[end]))) ++end;
      auto group = choice_group(s.substr(pos, end - pos));
      if (group) {
        answer += *group;
        collecting = true;
      } else if (collecting) {
        break;
      }
      pos = end;
      continue;
    }
    if (collecting) {
      const auto sep = separator_length(s, pos);
      if (sep == 0) break;
      pos += sep;
      continue;
    }
    ++pos;
  }
  if (answer.empty()) return std::nullopt;
  std::sort(answer.begin(), answer.end());
  answer.erase(std::unique(answer.begin(), answer.end()), answer.end());
  return answer;
}

GradingRule::GradingRule(std::string name, AnswerExtractor extract_output, AnswerExtractor extract_key)
    : name_(std::move(name)), output_(std::move(extract_output)), key_(std::move(extract_key)) {}

GradingRule GradingRule::choice_letter() {
  return GradingRule("choice-letter", extract_choice_letters, extract_choice_letters);
}

GradingRule GradingRule::exact_match() {
  auto norm = [](std::string_view s) -> std::optional<std::string> {
    auto n = normalize_answer(s);
    if (n.empty()) return std::nullopt;
    return n;
  };
  return GradingRule("exact", norm, norm);
}

int grade(std::string_view raw_output, std::string_view answer_key, const GradingRule& rule, Warnings* warnings) {
  require(!normalize_answer(answer_key).empty(), "grade: empty answer key");
  const auto key = rule.canonical_key(answer_key);
  if (!key) {
    if (warnings) warnings->push_back(rule.name() + ": answer key \"" + std::string(answer_key) + "\" is not gradable");
    return 0;
  }
  const auto got = rule.extract(raw_output);
  if (!got) {
    if (warnings) {
      std::string snippet(raw_output.substr(0, 40));
      warnings->push_back(rule.name() + ": no answer extracted from \"" + snippet + "\"");
    }
    return 0;
  }
  return *got == *key ? 1 : 0;
}

// ---------------------------------------------------------------------------
// Logs and aggregation

std::vector<ResponseLog> load_response_logs(const std::vector<std::filesystem::path>& paths) {
  std::vector<ResponseLog> logs;
  std::map<std::string, std::size_t> by_model;
  for (const auto& path : paths) {
    std::istringstream in(read_text_file(path));
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      if (!line.empty() && line.back() == '\r') line.pop_back();
      if (line.find_first_not_of(" \t") == std::string::npos) continue;
      const auto where = path.string() + ":" + std::to_string(lineno);
      json rec;
      try {
        rec = json::parse(line);
      } catch (const json::parse_error& e) {
        fail(ErrorKind::parse, where + ": " + e.what());
      }
      if (!rec.is_object()) fail(ErrorKind::parse, where + ": record must be an object");
      const auto& attempt = field(rec, "attempt", where);
      if (!attempt.is_number_integer()) fail(ErrorKind::parse, where + ": \"attempt\" must be an integer");
      Attempt a{string_field(rec, "item", where), attempt.get<int>(), string_field(rec, "output", where)};
      const auto model = string_field(rec, "model", where);
      auto [it, inserted] = by_model.emplace(model, logs.size());
      if (inserted) logs.push_back({model, {}});
      logs[it->second].entries.push_back(std::move(a));
    }
  }
  return logs;
}

void save_response_log_jsonl(const std::filesystem::path& path, const std::vector<ResponseLog>& logs) {
  std::string out;
  for (const auto& log : logs)
    for (const auto& e : log.entries)
      out += json{{"model", log.model_id}, {"item", e.item_id}, {"attempt", e.attempt_index}, {"output", e.raw_output}}
                 .dump() +
             "\n";
  write_text_file(path, out);
}

void ResponseMatrix::validate() const {
  const auto m = static_cast<Eigen::Index>(item_ids.size());
  const auto n = static_cast<Eigen::Index>(model_ids.size());
  if (scores.rows() != m || scores.cols() != n || weights.rows() != m || weights.cols() != n)
    fail(ErrorKind::dimension, "response matrix: X is " + std::to_string(scores.rows()) + "x" +
                                   std::to_string(scores.cols()) + ", W is " + std::to_string(weights.rows()) + "x" +
                                   std::to_string(weights.cols()) + ", ids give " + std::to_string(m) + "x" +
                                   std::to_string(n));
  for (Eigen::Index i = 0; i < m; ++i)
    for (Eigen::Index j = 0; j < n; ++j) {
      const double x = scores(i, j), w = weights(i, j);
      if (!(x >= 0.0 && x <= 1.0) || !(w >= 0.0 && w <= 1.0))
        fail(ErrorKind::validation, "response matrix: cell (" + item_ids[static_cast<std::size_t>(i)] + ", " +
                                        model_ids[static_cast<std::size_t>(j)] + ") outside [0,1]");
    }
}

AggregateResult aggregate(const std::vector<ResponseLog>& logs, const ItemBank& bank, const GradingRule& rule,
                          int repeats) {
  require(repeats >= 1, "aggregate: repeats must be >= 1");
  if (logs.empty()) fail(ErrorKind::validation, "aggregate: no response logs");

  std::unordered_map<std::string, std::size_t> item_index;
  for (std::size_t i = 0; i < bank.size(); ++i) item_index.emplace(bank.items()[i].id, i);

  std::vector<std::string> unknown;
  std::unordered_set<std::string> unknown_seen;
  for (const auto& log : logs)
    for (const auto& e : log.entries)
      if (!item_index.count(e.item_id) && unknown_seen.insert(e.item_id).second) unknown.push_back(e.item_id);
  if (!unknown.empty()) {
    std::sort(unknown.begin(), unknown.end());
    fail(ErrorKind::validation, "aggregate: unknown item id(s) " + join_names(unknown));
  }

  // Merge logs per model; model order is lexicographic by id.
  std::map<std::string, std::vector<const Attempt*>> per_model;
  for (const auto& log : logs) {
    if (log.model_id.empty()) fail(ErrorKind::validation, "aggregate: response log with empty model id");
    auto& bucket = per_model[log.model_id];
    for (const auto& e : log.entries) bucket.push_back(&e);
  }

  AggregateResult out;
  auto& rm = out.matrix;
  rm.item_ids = bank.item_ids();
  for (const auto& [model, _] : per_model) rm.model_ids.push_back(model);
  const auto m = static_cast<Eigen::Index>(bank.size());
  const auto n = static_cast<Eigen::Index>(per_model.size());
  Matrix correct = Matrix::Zero(m, n), graded = Matrix::Zero(m, n);

  Eigen::Index j = 0;
  for (const auto& [model, attempts] : per_model) {
    std::set<std::pair<std::size_t, int>> seen;
    for (const auto* a : attempts) {
      const auto i = item_index.at(a->item_id);
      if (a->attempt_index < 0 || a->attempt_index >= repeats)
        fail(ErrorKind::validation, "aggregate: model \"" + model + "\" item \"" + a->item_id + "\" attempt " +
                                        std::to_string(a->attempt_index) + " outside [0," +
                                        std::to_string(repeats) + ")");
      if (!seen.emplace(i, a->attempt_index).second)
        fail(ErrorKind::validation, "aggregate: model \"" + model + "\" has duplicate attempt " +
                                        std::to_string(a->attempt_index) + " for item \"" + a->item_id + "\"");
      const auto ii = static_cast<Eigen::Index>(i);
      graded(ii, j) += 1.0;
      correct(ii, j) += grade(a->raw_output, bank.items()[i].answer_key, rule, &out.warnings);
    }
    ++j;
  }

  rm.scores = Matrix::Zero(m, n);
  rm.weights = Matrix::Zero(m, n);
  for (Eigen::Index i = 0; i < m; ++i)
    for (Eigen::Index c = 0; c < n; ++c) {
      if (graded(i, c) == 0.0) continue;
      rm.scores(i, c) = correct(i, c) / graded(i, c);
      rm.weights(i, c) = std::min(graded(i, c) / repeats, 1.0);
    }
  return out;
}

LabeledMatrix to_labeled(const ResponseMatrix& rm, bool weights) {
  return {"item_id", rm.item_ids, rm.model_ids, weights ? rm.weights : rm.scores};
}

void save_response_matrix(const std::filesystem::path& scores_path, const std::filesystem::path& weights_path,
                          const ResponseMatrix& rm) {
  rm.validate();
  write_matrix_csv(scores_path, to_labeled(rm, false));
  write_matrix_csv(weights_path, to_labeled(rm, true));
}

ResponseMatrix load_response_matrix(const std::filesystem::path& scores_path,
                                    const std::optional<std::filesystem::path>& weights_path) {
  auto x = read_matrix_csv(scores_path);
  ResponseMatrix rm{x.row_ids, x.col_ids, x.values, Matrix::Ones(x.rows(), x.cols())};
  if (weights_path) {
    auto w = read_matrix_csv(*weights_path);
    if (w.row_ids != x.row_ids || w.col_ids != x.col_ids)
      fail(ErrorKind::dimension, weights_path->string() + " (" + std::to_string(w.rows()) + "x" +
                                     std::to_string(w.cols()) + ") does not match the ids of " +
                                     scores_path.string() + " (" + std::to_string(x.rows()) + "x" +
                                     std::to_string(x.cols()) + ")");
    rm.weights = w.values;
  }
  rm.validate();
  return rm;
}

Matrix binarize(const Matrix& x, double threshold) {
  return (x.array() >= threshold).cast<double>().matrix();
}

}  // namespace cdm
