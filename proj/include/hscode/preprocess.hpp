#pragma once

#include <cstddef>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "hscode/nomenclature.hpp"
#include "json.hpp"

namespace hscode {

inline constexpr std::string_view kOthersLabel = "OTHERS";

struct RawRecord {
  std::string description;
  std::string hs_code;  // as found in the source file
  double weight = 0.0;
  double value = 0.0;
};

struct CleanRecord {
  std::vector<std::string> tokens;
  HsCode hs_code;     // 6-digit training label
  std::string label;  // flat-model label; OTHERS after grouping
  double weight = 0.0;
  double value = 0.0;
  double weight_z = 0.0;
  double value_z = 0.0;

  std::string text() const;
};

struct Lexicon {
  std::map<std::string, std::size_t> vocabulary;  // token -> frequency
  std::map<std::string, std::string> abbreviations;

  bool contains(const std::string &token) const {
    return vocabulary.count(token) != 0;
  }
  void add_tokens(const std::vector<std::string> &tokens);
};

struct NumericStats {
  double weight_mean = 0.0;
  double weight_std = 0.0;
  double value_mean = 0.0;
  double value_std = 0.0;

  // Z-scores against these (training) statistics. A zero stddev maps the
  // feature to 0.
  std::pair<double, double> standardize(double weight, double value) const;
};

struct Dataset {
  std::vector<CleanRecord> records;
  std::map<std::string, std::size_t> class_stats;  // label -> count
  NumericStats numeric_stats;
  std::set<std::string> grouped_classes;  // labels folded into OTHERS

  void recount();
};

// ---- text ------------------------------------------------------------------

// Deterministic suffix-rule lemmatizer, applied until it reaches a fixpoint.
std::string lemmatize(std::string_view word);

// Lowercases, removes e-mail addresses and phone/fax/reference digit runs,
// strips special characters, collapses whitespace and lemmatizes.
std::vector<std::string> clean_text(std::string_view raw);

std::vector<std::string> expand_abbreviations(std::vector<std::string> tokens,
                                              const Lexicon &lexicon);

// Optimal-string-alignment Damerau-Levenshtein distance.
std::size_t edit_distance(std::string_view a, std::string_view b);

std::vector<std::string> correct_spelling(std::vector<std::string> tokens,
                                          const Lexicon &lexicon,
                                          std::size_t max_edit = 1);

// clean_text + abbreviation expansion + spelling correction.
std::vector<std::string> preprocess_text(std::string_view raw,
                                         const Lexicon &lexicon);

// ---- dataset ---------------------------------------------------------------

// Keeps a description mapped to several codes only when one code holds
// strictly more than 80% of its rows (and then only that code's rows).
std::vector<CleanRecord> resolve_ambiguous(const std::vector<CleanRecord> &records);

Dataset group_low_frequency(Dataset dataset, double min_fraction);
Dataset standardize_numeric(Dataset dataset);

Dataset make_dataset(std::vector<CleanRecord> records);

// Normalizes a source label to its 6-digit code. Dots and spaces are
// dropped, an odd digit count is left-padded with a zero (lost leading
// zero of chapters 01-09), and codes deeper than 6 digits are truncated.
std::optional<HsCode> normalize_label(std::string_view raw);

// ---- ingestion -------------------------------------------------------------

struct IngestReport {
  std::size_t rows_read = 0;
  std::size_t bad_code = 0;
  std::size_t empty_after_cleaning = 0;
  std::size_t ambiguous_dropped = 0;
  std::size_t kept = 0;
};

std::vector<RawRecord> parse_delimited(std::string_view text, char delimiter);
std::vector<RawRecord> parse_jsonl(std::string_view text);
// Chooses JSON-lines for *.jsonl / *.json, delimited text otherwise.
std::vector<RawRecord> read_records(const std::string &path, char delimiter = ',');

std::map<std::string, std::string> load_abbreviations(const std::string &path);

struct PrepareOptions {
  double others_min_fraction = 0.001;
  std::map<std::string, std::string> abbreviations;
};

// Full training-side preparation: clean, expand abbreviations, resolve
// ambiguity, group thin classes, standardize numerics. The returned lexicon
// holds the training vocabulary plus `extra_vocabulary` tokens.
struct PreparedData {
  Dataset dataset;
  Lexicon lexicon;
  IngestReport report;
};
PreparedData prepare_training_data(const std::vector<RawRecord> &rows,
                                   const PrepareOptions &options,
                                   const std::vector<std::string> &extra_texts = {});

// Cleans raw test rows with training artefacts; rows that fail cleaning
// or carry an unusable code are skipped.
std::vector<CleanRecord> prepare_eval_rows(const std::vector<RawRecord> &rows,
                                           const Lexicon &lexicon,
                                           const NumericStats &stats);

nlohmann::json record_to_json(const CleanRecord &record);
CleanRecord record_from_json(const nlohmann::json &json);
nlohmann::json lexicon_to_json(const Lexicon &lexicon);
Lexicon lexicon_from_json(const nlohmann::json &json);
nlohmann::json stats_to_json(const NumericStats &stats);
NumericStats stats_from_json(const nlohmann::json &json);

}  // namespace hscode
