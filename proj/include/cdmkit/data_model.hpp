#pragma once

// Item bank, Q-matrix, response logs and their aggregation into the
// item x model response matrix.

#include <cstddef>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "cdmkit/error.hpp"
#include "cdmkit/matrix.hpp"

namespace cdm {

inline constexpr int kFormatVersion = 1;
inline constexpr int kDefaultRepeats = 10;

struct Concept {
  std::string id;
  std::string label;
};

class ConceptCatalog {
 public:
  ConceptCatalog() = default;
  /// Throws ValidationError on empty or duplicate ids.
  explicit ConceptCatalog(std::vector<Concept> concepts);

  std::size_t size() const { return concepts_.size(); }
  const std::vector<Concept>& concepts() const { return concepts_; }
  const Concept& operator[](std::size_t k) const { return concepts_[k]; }
  std::optional<std::size_t> index_of(std::string_view id) const;
  std::vector<std::string> ids() const;

 private:
  std::vector<Concept> concepts_;
};

struct Item {
  std::string id;
  std::string prompt;
  std::string answer_key;
  std::vector<std::string> concept_tags;
};

/// Whitespace-trimmed, ASCII-uppercased, internal runs of whitespace
/// collapsed to one space.
std::string normalize_answer(std::string_view raw);

class ItemBank {
 public:
  /// Validates and normalizes: ids unique, tags known and non-empty,
  /// answer keys non-empty after normalization. Tags are de-duplicated and
  /// ordered by catalog position.
  ItemBank(ConceptCatalog catalog, std::vector<Item> items);

  std::size_t size() const { return items_.size(); }
  const std::vector<Item>& items() const { return items_; }
  const ConceptCatalog& catalog() const { return catalog_; }
  std::optional<std::size_t> index_of(std::string_view item_id) const;
  std::vector<std::string> item_ids() const;

  /// Concepts no item is tagged with; allowed, but worth reporting.
  std::vector<std::string> orphan_concepts() const;

  bool operator==(const ItemBank& other) const;

 private:
  ConceptCatalog catalog_;
  std::vector<Item> items_;
};

enum class BankFormat { json, csv };

/// For csv, the concept catalog is read from `concepts.csv` next to `path`
/// unless `concepts_path` is given.
ItemBank load_item_bank(const std::filesystem::path& path, BankFormat format,
                        const std::optional<std::filesystem::path>& concepts_path = {});
void save_item_bank_json(const std::filesystem::path& path, const ItemBank& bank);
void save_item_bank_csv(const std::filesystem::path& items_path,
                        const std::filesystem::path& concepts_path, const ItemBank& bank);

/// Binary M x K matrix, entry (i,k) = 1 iff item i is tagged with concept k.
Matrix qmatrix(const ItemBank& bank);

// ---------------------------------------------------------------------------
// Grading

/// Pulls a comparable answer out of free-form model output. An empty
/// optional means nothing could be extracted.
using AnswerExtractor = std::function<std::optional<std::string>(std::string_view)>;

class GradingRule {
 public:
  /// Uppercases the output and takes the first standalone group of letters
  /// drawn from {A,B,C,D}; consecutive groups joined only by separators
  /// ("A, C", "A、C") form a multi-select answer. Letters are compared as an
  /// order-insensitive set.
  static GradingRule choice_letter();
  /// normalize_answer(output) == normalize_answer(key).
  static GradingRule exact_match();
  /// Custom rule: both output and key go through `extract`.
  GradingRule(std::string name, AnswerExtractor extract_output, AnswerExtractor extract_key);

  const std::string& name() const { return name_; }
  std::optional<std::string> extract(std::string_view raw_output) const { return output_(raw_output); }
  std::optional<std::string> canonical_key(std::string_view key) const { return key_(key); }

 private:
  std::string name_;
  AnswerExtractor output_;
  AnswerExtractor key_;
};

std::optional<std::string> extract_choice_letters(std::string_view raw);

/// Returns 1 on a match, else 0. Extraction failures score 0 and append a
/// warning when `warnings` is provided.
int grade(std::string_view raw_output, std::string_view answer_key, const GradingRule& rule,
          Warnings* warnings = nullptr);

// ---------------------------------------------------------------------------
// Responses

struct Attempt {
  std::string item_id;
  int attempt_index = 0;
  std::string raw_output;
};

struct ResponseLog {
  std::string model_id;
  std::vector<Attempt> entries;
};

/// Reads JSONL records {"model","item","attempt","output"}; one file may
/// hold several models. Logs come back in first-appearance order.
std::vector<ResponseLog> load_response_logs(const std::vector<std::filesystem::path>& paths);
void save_response_log_jsonl(const std::filesystem::path& path, const std::vector<ResponseLog>& logs);

struct ResponseMatrix {
  std::vector<std::string> item_ids;
  std::vector<std::string> model_ids;
  Matrix scores;   // X, M x N in [0,1]
  Matrix weights;  // W, M x N in [0,1]; 0 marks an unobserved cell

  std::size_t items() const { return item_ids.size(); }
  std::size_t models() const { return model_ids.size(); }
  /// Checks shapes and the value-range invariants.
  void validate() const;
};

struct AggregateResult {
  ResponseMatrix matrix;
  Warnings warnings;
};

/// X = correct/graded per cell, W = min(graded/repeats, 1). Models are
/// ordered by id so the result does not depend on log order.
AggregateResult aggregate(const std::vector<ResponseLog>& logs, const ItemBank& bank,
                          const GradingRule& rule, int repeats = kDefaultRepeats);

/// Writes `scores_path` (X) and `weights_path` (W) with item ids as rows and
/// model ids as columns.
void save_response_matrix(const std::filesystem::path& scores_path,
                          const std::filesystem::path& weights_path, const ResponseMatrix& rm);
/// Without a weights file W is all-ones.
ResponseMatrix load_response_matrix(const std::filesystem::path& scores_path,
                                    const std::optional<std::filesystem::path>& weights_path = {});

/// Elementwise x >= threshold -> 1, else 0.
Matrix binarize(const Matrix& x, double threshold = 0.5);

LabeledMatrix to_labeled(const ResponseMatrix& rm, bool weights);
LabeledMatrix qmatrix_labeled(const ItemBank& bank);

}  // namespace cdm
