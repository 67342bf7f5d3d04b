#include "hscode/preprocess.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <regex>
#include <unordered_map>
#include <unordered_set>

#include "hscode/error.hpp"
#include "hscode/text_util.hpp"

namespace hscode {

std::string CleanRecord::text() const { return join(tokens, " "); }

void Lexicon::add_tokens(const std::vector<std::string> &tokens) {
  for (const auto &t : tokens) ++vocabulary[t];
}

std::pair<double, double> NumericStats::standardize(double weight,
                                                    double value) const {
  const double wz = weight_std > 0.0 ? (weight - weight_mean) / weight_std : 0.0;
  const double vz = value_std > 0.0 ? (value - value_mean) / value_std : 0.0;
  return {wz, vz};
}

void Dataset::recount() {
  class_stats.clear();
  for (const auto &r : records) ++class_stats[r.label];
}

// ---------------------------------------------------------------------------
// Lemmatizer
// ---------------------------------------------------------------------------

namespace {

// Nouns whose -ing/-ed/-s ending is not inflectional.
const std::unordered_set<std::string> &protected_words() {
  static const std::unordered_set<std::string> words = {
      "bearing",  "casing",   "packing",  "clothing", "building", "fitting",
      "coating",  "housing",  "lining",   "tubing",   "piping",   "wiring",
      "ceiling",  "string",   "spring",   "ring",     "thing",    "wing",
      "king",     "sling",    "bedding",  "awning",   "roofing",  "flooring",
      "heading",  "filling",  "stuffing", "seasoning", "dressing", "pudding",
      "sterling", "shortening", "frosting", "icing",  "railing",  "siding",
      "sheeting", "matting",  "netting",  "footing",  "stocking", "legging",
      "conditioning", "lighting", "plumbing", "molding", "moulding", "handling",
      "series",   "species",  "means",    "news",     "hundred",  "chassis",
      "gas",      "glass",    "lens",     "bus",      "mass",     "process",
      "steering", "engineering", "printing", "evening", "morning", "during",
      "nothing",  "anything", "something", "everything", "including", "excluding",
      "cutting",  "sewing",   "knitting", "welding",  "spinning", "weaving",
      "forging",  "casting",  "stamping", "mounting",
  };
  return words;
}

const std::unordered_map<std::string, std::string> &irregular_words() {
  static const std::unordered_map<std::string, std::string> words = {
      {"mens", "men"},     {"womens", "women"}, {"used", "use"},
      {"feet", "foot"},    {"teeth", "tooth"},  {"children", "child"},
      {"knives", "knife"}, {"leaves", "leaf"},  {"shelves", "shelf"},
      {"halves", "half"},  {"wives", "wife"},   {"lives", "life"},
      {"mice", "mouse"},   {"geese", "goose"},  {"oxen", "ox"},
      {"dice", "die"},     {"sizes", "size"},   {"sized", "size"},
  };
  return words;
}

bool is_vowel(char c) {
  return c == 'a' || c == 'e' || c == 'i' || c == 'o' || c == 'u';
}

bool has_vowel(std::string_view s) {
  return std::any_of(s.begin(), s.end(),
                     [](char c) { return is_vowel(c) || c == 'y'; });
}

bool ends_with(std::string_view s, std::string_view suffix) {
  return s.size() >= suffix.size() &&
         s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
}

// Repairs the stem left behind after removing -ing/-ed.
std::string restore_stem(std::string stem) {
  const auto n = stem.size();
  if (n >= 2 && stem[n - 1] == stem[n - 2] && !is_vowel(stem[n - 1]) &&
      stem[n - 1] != 'l' && stem[n - 1] != 's' && stem[n - 1] != 'z') {
    stem.pop_back();
    return stem;
  }
  // Endings that take a silent e unconditionally.
  for (std::string_view e : {"bl", "cl", "dg", "rg", "tl", "pl", "gl", "kl"}) {
    if (ends_with(stem, e)) return stem + "e";
  }
  // Vowel-initial endings take the e only after a consonant ("operat" ->
  // "operate" but "heat" stays).
  for (std::string_view e :
       {"at", "ud", "ur", "os", "ov", "ac", "uc", "ag", "iv", "iz", "ic", "ut"}) {
    if (ends_with(stem, e) && n > 2 && !is_vowel(stem[n - 3])) return stem + "e";
  }
  return stem;
}

std::string lemmatize_once(const std::string &w) {
  if (w.size() <= 3) return w;
  if (protected_words().count(w)) return w;
  if (auto it = irregular_words().find(w); it != irregular_words().end()) {
    return it->second;
  }
  if (std::any_of(w.begin(), w.end(),
                  [](char c) { return std::isdigit(static_cast<unsigned char>(c)); })) {
    return w;
  }
  const auto n = w.size();
  if (ends_with(w, "ies") && n > 4) return w.substr(0, n - 3) + "y";
  if (ends_with(w, "sses")) return w.substr(0, n - 2);
  for (std::string_view e : {"xes", "ches", "shes"}) {
    if (ends_with(w, e)) return w.substr(0, n - 2);
  }
  if (ends_with(w, "s") && !ends_with(w, "ss") && !ends_with(w, "us") &&
      !ends_with(w, "is")) {
    std::string stem = w.substr(0, n - 1);
    if (stem.size() >= 3) return stem;
    return w;
  }
  if (ends_with(w, "ing")) {
    std::string stem = w.substr(0, n - 3);
    if (stem.size() >= 3 && has_vowel(stem)) return restore_stem(stem);
    return w;
  }
  if (ends_with(w, "ed") && !ends_with(w, "eed")) {
    std::string stem = w.substr(0, n - 2);
    if (stem.size() >= 3 && has_vowel(stem)) return restore_stem(stem);
    return w;
  }
  return w;
}

}  // namespace

std::string lemmatize(std::string_view word) {
  std::string current(word);
  for (int i = 0; i < 8; ++i) {
    std::string next = lemmatize_once(current);
    if (next == current) break;
    current = std::move(next);
  }
  return current;
}

// ---------------------------------------------------------------------------
// clean_text
// ---------------------------------------------------------------------------

namespace {

const std::unordered_set<std::string> &phone_cues() {
  static const std::unordered_set<std::string> cues = {
      "tel", "telephone", "phone", "ph", "fax", "mob", "mobile", "cell",
      "contact", "tlf", "telefax", "whatsapp"};
  return cues;
}

std::string strip_nonalnum(const std::string &token) {
  std::string out;
  for (char c : token) {
    if (std::isalnum(static_cast<unsigned char>(c))) out.push_back(c);
  }
  return out;
}

bool is_phone_piece(const std::string &token, std::size_t &digits) {
  std::size_t d = 0;
  for (char c : token) {
    if (std::isdigit(static_cast<unsigned char>(c))) {
      ++d;
    } else if (std::string_view("+()-./:#").find(c) == std::string_view::npos) {
      return false;
    }
  }
  digits += d;
  return true;
}

bool all_digits(const std::string &s) {
  return !s.empty() && std::all_of(s.begin(), s.end(), [](char c) {
    return std::isdigit(static_cast<unsigned char>(c));
  });
}

}  // namespace

std::vector<std::string> clean_text(std::string_view raw) {
  static const std::regex email(R"([a-z0-9._%+\-]+@[a-z0-9.\-]+\.[a-z]{2,})");
  std::string text = std::regex_replace(to_lower(raw), email, " ");

  // Phone and fax numbers announced by a cue word.
  auto words = split_whitespace(text);
  std::vector<std::string> kept;
  for (std::size_t i = 0; i < words.size(); ++i) {
    if (phone_cues().count(strip_nonalnum(words[i]))) {
      std::size_t digits = 0;
      std::size_t j = i + 1;
      // "no", "nr" and similar fillers may sit between cue and number.
      while (j < words.size() && (strip_nonalnum(words[j]) == "no" ||
                                  strip_nonalnum(words[j]) == "nr")) {
        ++j;
      }
      std::size_t k = j;
      while (k < words.size() && is_phone_piece(words[k], digits)) ++k;
      if (digits >= 7) {
        i = k - 1;
        continue;
      }
    }
    kept.push_back(words[i]);
  }

  std::string stripped;
  for (const auto &w : kept) {
    for (char c : w) {
      const bool ok = (c >= 'a' && c <= 'z') || (c >= '0' && c <= '9') || c == '-';
      stripped.push_back(ok ? c : ' ');
    }
    stripped.push_back(' ');
  }

  std::vector<std::string> tokens;
  for (auto &tok : split_whitespace(stripped)) {
    const auto b = tok.find_first_not_of('-');
    if (b == std::string::npos) continue;
    const auto e = tok.find_last_not_of('-');
    tok = tok.substr(b, e - b + 1);
    if (all_digits(tok) && tok.size() >= 7) continue;  // reference numbers
    tokens.push_back(lemmatize(tok));
  }
  return tokens;
}

std::vector<std::string> expand_abbreviations(std::vector<std::string> tokens,
                                              const Lexicon &lexicon) {
  if (lexicon.abbreviations.empty()) return tokens;
  // Keys are matched in lemma space, like the tokens they replace.
  std::map<std::string, std::string> table;
  for (const auto &[k, v] : lexicon.abbreviations) table.emplace(lemmatize(k), v);
  std::vector<std::string> out;
  for (auto &t : tokens) {
    auto it = table.find(t);
    if (it == table.end()) {
      out.push_back(std::move(t));
      continue;
    }
    for (auto &piece : clean_text(it->second)) out.push_back(std::move(piece));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Spelling
// ---------------------------------------------------------------------------

std::size_t edit_distance(std::string_view a, std::string_view b) {
  const auto n = a.size();
  const auto m = b.size();
  std::vector<std::vector<std::size_t>> d(n + 1, std::vector<std::size_t>(m + 1));
  for (std::size_t i = 0; i <= n; ++i) d[i][0] = i;
  for (std::size_t j = 0; j <= m; ++j) d[0][j] = j;
  for (std::size_t i = 1; i <= n; ++i) {
    for (std::size_t j = 1; j <= m; ++j) {
      const std::size_t cost = a[i - 1] == b[j - 1] ? 0 : 1;
      d[i][j] = std::min({d[i - 1][j] + 1, d[i][j - 1] + 1, d[i - 1][j - 1] + cost});
      if (i > 1 && j > 1 && a[i - 1] == b[j - 2] && a[i - 2] == b[j - 1]) {
        d[i][j] = std::min(d[i][j], d[i - 2][j - 2] + 1);
      }
    }
  }
  return d[n][m];
}

std::vector<std::string> correct_spelling(std::vector<std::string> tokens,
                                          const Lexicon &lexicon,
                                          std::size_t max_edit) {
  for (auto &t : tokens) {
    if (t.size() < 4 || lexicon.contains(t)) continue;
    if (std::any_of(t.begin(), t.end(), [](char c) {
          return std::isdigit(static_cast<unsigned char>(c));
        })) {
      continue;
    }
    const std::string *best = nullptr;
    std::size_t best_freq = 0;
    for (const auto &[word, freq] : lexicon.vocabulary) {
      const auto len_gap = word.size() > t.size() ? word.size() - t.size()
                                                  : t.size() - word.size();
      if (len_gap > max_edit) continue;
      if (edit_distance(t, word) > max_edit) continue;
      // Map iteration is lexicographic, so strict > keeps the smallest word
      // among equal frequencies.
      if (!best || freq > best_freq) {
        best = &word;
        best_freq = freq;
      }
    }
    if (best) t = *best;
  }
  return tokens;
}

std::vector<std::string> preprocess_text(std::string_view raw,
                                         const Lexicon &lexicon) {
  auto tokens = expand_abbreviations(clean_text(raw), lexicon);
  if (lexicon.vocabulary.empty()) return tokens;
  return correct_spelling(std::move(tokens), lexicon);
}

// ---------------------------------------------------------------------------
// Dataset preparation
// ---------------------------------------------------------------------------

std::vector<CleanRecord> resolve_ambiguous(const std::vector<CleanRecord> &records) {
  std::map<std::string, std::map<std::string, std::size_t>> counts;
  for (const auto &r : records) ++counts[r.text()][r.hs_code.digits()];

  std::map<std::string, std::optional<std::string>> keep;  // text -> code
  for (const auto &[text, by_code] : counts) {
    std::size_t total = 0;
    for (const auto &[code, c] : by_code) total += c;
    std::optional<std::string> winner;
    for (const auto &[code, c] : by_code) {
      // c / total > 0.8, kept in integers.
      if (c * 5 > total * 4) winner = code;
    }
    keep[text] = winner;
  }

  std::vector<CleanRecord> out;
  for (const auto &r : records) {
    const auto &winner = keep[r.text()];
    if (winner && *winner == r.hs_code.digits()) out.push_back(r);
  }
  return out;
}

Dataset group_low_frequency(Dataset dataset, double min_fraction) {
  if (min_fraction < 0.0 || min_fraction >= 1.0) {
    throw Error(ErrorCode::InvalidArgument, "min_fraction must be in [0, 1)");
  }
  dataset.recount();
  const double n = static_cast<double>(dataset.records.size());
  std::set<std::string> thin;
  for (const auto &[label, count] : dataset.class_stats) {
    if (label != kOthersLabel && static_cast<double>(count) < min_fraction * n) {
      thin.insert(label);
    }
  }
  for (auto &r : dataset.records) {
    if (thin.count(r.label)) r.label = std::string(kOthersLabel);
  }
  dataset.grouped_classes.insert(thin.begin(), thin.end());
  dataset.recount();
  return dataset;
}

Dataset standardize_numeric(Dataset dataset) {
  const auto n = dataset.records.size();
  NumericStats s;
  if (n > 0) {
    for (const auto &r : dataset.records) {
      s.weight_mean += r.weight;
      s.value_mean += r.value;
    }
    s.weight_mean /= static_cast<double>(n);
    s.value_mean /= static_cast<double>(n);
    double wv = 0.0;
    double vv = 0.0;
    for (const auto &r : dataset.records) {
      wv += (r.weight - s.weight_mean) * (r.weight - s.weight_mean);
      vv += (r.value - s.value_mean) * (r.value - s.value_mean);
    }
    s.weight_std = std::sqrt(wv / static_cast<double>(n));
    s.value_std = std::sqrt(vv / static_cast<double>(n));
  }
  for (auto &r : dataset.records) {
    std::tie(r.weight_z, r.value_z) = s.standardize(r.weight, r.value);
  }
  dataset.numeric_stats = s;
  return dataset;
}

Dataset make_dataset(std::vector<CleanRecord> records) {
  Dataset d;
  d.records = std::move(records);
  d.recount();
  return d;
}

std::optional<HsCode> normalize_label(std::string_view raw) {
  std::string digits;
  for (char c : raw) {
    if (std::isdigit(static_cast<unsigned char>(c))) {
      digits.push_back(c);
    } else if (c != '.' && c != ' ' && c != '-' && c != '"' && c != '\'') {
      return std::nullopt;
    }
  }
  if (digits.size() % 2 == 1) digits.insert(digits.begin(), '0');
  if (digits.size() < 6) return std::nullopt;
  return HsCode::parse(digits.substr(0, 6));
}

// ---------------------------------------------------------------------------
// Ingestion
// ---------------------------------------------------------------------------

namespace {

std::vector<std::vector<std::string>> split_rows(std::string_view text, char delim) {
  std::vector<std::vector<std::string>> rows;
  std::vector<std::string> row;
  std::string field;
  bool quoted = false;
  bool any = false;
  for (std::size_t i = 0; i < text.size(); ++i) {
    const char c = text[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < text.size() && text[i + 1] == '"') {
          field.push_back('"');
          ++i;
        } else {
          quoted = false;
        }
      } else {
        field.push_back(c);
      }
      continue;
    }
    if (c == '"') {
      quoted = true;
      any = true;
    } else if (c == delim) {
      row.push_back(std::move(field));
      field.clear();
      any = true;
    } else if (c == '\n' || c == '\r') {
      if (c == '\r' && i + 1 < text.size() && text[i + 1] == '\n') ++i;
      if (any || !field.empty()) {
        row.push_back(std::move(field));
        rows.push_back(std::move(row));
      }
      row.clear();
      field.clear();
      any = false;
    } else {
      field.push_back(c);
      any = true;
    }
  }
  if (quoted) throw Error(ErrorCode::FormatError, "unterminated quoted field");
  if (any || !field.empty()) {
    row.push_back(std::move(field));
    rows.push_back(std::move(row));
  }
  return rows;
}

double parse_number(const std::string &s) {
  const auto t = trim(s);
  if (t.empty()) return 0.0;
  try {
    std::size_t used = 0;
    double v = std::stod(t, &used);
    if (used != t.size() || !std::isfinite(v)) throw std::invalid_argument(t);
    return v;
  } catch (const std::exception &) {
    throw Error(ErrorCode::FormatError, "not a number: '" + t + "'");
  }
}

}  // namespace

std::vector<RawRecord> parse_delimited(std::string_view text, char delimiter) {
  auto rows = split_rows(text, delimiter);
  std::vector<RawRecord> out;
  if (rows.empty()) return out;

  // Column positions default to description, hs_code, weight, value and
  // are taken from the header when one is present.
  int col_desc = 0, col_code = 1, col_weight = 2, col_value = 3;
  std::size_t first = 0;
  {
    std::map<std::string, int> header;
    for (std::size_t i = 0; i < rows[0].size(); ++i) {
      header[to_lower(trim(rows[0][i]))] = static_cast<int>(i);
    }
    if (header.count("description") && header.count("hs_code")) {
      col_desc = header["description"];
      col_code = header["hs_code"];
      col_weight = header.count("weight") ? header["weight"] : -1;
      col_value = header.count("value") ? header["value"] : -1;
      first = 1;
    }
  }
  auto field = [](const std::vector<std::string> &row, int col) -> std::string {
    if (col < 0 || static_cast<std::size_t>(col) >= row.size()) return {};
    return row[static_cast<std::size_t>(col)];
  };
  for (std::size_t i = first; i < rows.size(); ++i) {
    RawRecord r;
    r.description = field(rows[i], col_desc);
    r.hs_code = trim(field(rows[i], col_code));
    r.weight = parse_number(field(rows[i], col_weight));
    r.value = parse_number(field(rows[i], col_value));
    out.push_back(std::move(r));
  }
  return out;
}

std::vector<RawRecord> parse_jsonl(std::string_view text) {
  std::vector<RawRecord> out;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos < text.size()) {
    auto end = text.find('\n', pos);
    if (end == std::string_view::npos) end = text.size();
    const auto line = trim(text.substr(pos, end - pos));
    pos = end + 1;
    ++line_no;
    if (line.empty()) continue;
    try {
      const auto j = nlohmann::json::parse(line);
      RawRecord r;
      r.description = j.value("description", std::string());
      const auto &code = j.at("hs_code");
      r.hs_code = code.is_string() ? code.get<std::string>() : code.dump();
      r.weight = j.value("weight", 0.0);
      r.value = j.value("value", 0.0);
      out.push_back(std::move(r));
    } catch (const nlohmann::json::exception &e) {
      throw Error(ErrorCode::FormatError,
                  "line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  return out;
}

std::vector<RawRecord> read_records(const std::string &path, char delimiter) {
  const auto text = read_file(path);
  if (path.ends_with(".jsonl") || path.ends_with(".json")) return parse_jsonl(text);
  if (path.ends_with(".tsv")) return parse_delimited(text, '\t');
  return parse_delimited(text, delimiter);
}

std::map<std::string, std::string> load_abbreviations(const std::string &path) {
  std::map<std::string, std::string> out;
  try {
    const auto j = nlohmann::json::parse(read_file(path));
    if (!j.is_object()) throw Error(ErrorCode::FormatError, path + ": expected object");
    for (const auto &[k, v] : j.items()) out[to_lower(k)] = v.get<std::string>();
  } catch (const nlohmann::json::exception &e) {
    throw Error(ErrorCode::FormatError, path + ": " + e.what());
  }
  return out;
}

PreparedData prepare_training_data(const std::vector<RawRecord> &rows,
                                   const PrepareOptions &options,
                                   const std::vector<std::string> &extra_texts) {
  PreparedData out;
  out.lexicon.abbreviations = options.abbreviations;
  out.report.rows_read = rows.size();

  std::vector<CleanRecord> records;
  for (const auto &row : rows) {
    auto code = normalize_label(row.hs_code);
    if (!code) {
      ++out.report.bad_code;
      continue;
    }
    auto tokens = expand_abbreviations(clean_text(row.description), out.lexicon);
    if (tokens.empty()) {
      ++out.report.empty_after_cleaning;
      continue;
    }
    CleanRecord r{std::move(tokens), *code, code->digits(), row.weight, row.value};
    records.push_back(std::move(r));
  }
  const auto before = records.size();
  records = resolve_ambiguous(records);
  out.report.ambiguous_dropped = before - records.size();
  out.report.kept = records.size();

  for (const auto &r : records) out.lexicon.add_tokens(r.tokens);
  for (const auto &t : extra_texts) out.lexicon.add_tokens(clean_text(t));

  auto dataset = make_dataset(std::move(records));
  dataset = group_low_frequency(std::move(dataset), options.others_min_fraction);
  out.dataset = standardize_numeric(std::move(dataset));
  return out;
}

std::vector<CleanRecord> prepare_eval_rows(const std::vector<RawRecord> &rows,
                                           const Lexicon &lexicon,
                                           const NumericStats &stats) {
  std::vector<CleanRecord> out;
  for (const auto &row : rows) {
    auto code = normalize_label(row.hs_code);
    if (!code) continue;
    auto tokens = preprocess_text(row.description, lexicon);
    if (tokens.empty()) continue;
    CleanRecord r{std::move(tokens), *code, code->digits(), row.weight, row.value};
    std::tie(r.weight_z, r.value_z) = stats.standardize(row.weight, row.value);
    out.push_back(std::move(r));
  }
  return out;
}

// ---------------------------------------------------------------------------
// JSON
// ---------------------------------------------------------------------------

nlohmann::json record_to_json(const CleanRecord &r) {
  return {{"tokens", r.tokens},     {"hs_code", r.hs_code.digits()},
          {"label", r.label},       {"weight", r.weight},
          {"value", r.value},       {"weight_z", r.weight_z},
          {"value_z", r.value_z}};
}

CleanRecord record_from_json(const nlohmann::json &j) {
  CleanRecord r{j.at("tokens").get<std::vector<std::string>>(),
                HsCode::parse(j.at("hs_code").get<std::string>()),
                j.at("label").get<std::string>(),
                j.value("weight", 0.0),
                j.value("value", 0.0),
                j.value("weight_z", 0.0),
                j.value("value_z", 0.0)};
  return r;
}

nlohmann::json lexicon_to_json(const Lexicon &lexicon) {
  return {{"vocabulary", lexicon.vocabulary}, {"abbreviations", lexicon.abbreviations}};
}

Lexicon lexicon_from_json(const nlohmann::json &j) {
  Lexicon l;
  l.vocabulary = j.at("vocabulary").get<std::map<std::string, std::size_t>>();
  l.abbreviations = j.at("abbreviations").get<std::map<std::string, std::string>>();
  return l;
}

nlohmann::json stats_to_json(const NumericStats &s) {
  return {{"weight_mean", s.weight_mean},
          {"weight_std", s.weight_std},
          {"value_mean", s.value_mean},
          {"value_std", s.value_std}};
}

NumericStats stats_from_json(const nlohmann::json &j) {
  return {j.at("weight_mean").get<double>(), j.at("weight_std").get<double>(),
          j.at("value_mean").get<double>(), j.at("value_std").get<double>()};
}

}  // namespace hscode
