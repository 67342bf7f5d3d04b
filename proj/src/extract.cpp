#include "hscode/extract.hpp"

#include <algorithm>
#include <cctype>

#include "hscode/error.hpp"
#include "hscode/text_util.hpp"

namespace hscode {

namespace {

constexpr std::pair<Pos, std::string_view> kPosNames[] = {
    {Pos::NOUN, "NOUN"}, {Pos::PROPN, "PROPN"}, {Pos::PRON, "PRON"},   {Pos::ADJ, "ADJ"},
    {Pos::VERB, "VERB"}, {Pos::ADP, "ADP"},     {Pos::CCONJ, "CCONJ"}, {Pos::DET, "DET"},
    {Pos::NUM, "NUM"},   {Pos::PART, "PART"},   {Pos::PUNCT, "PUNCT"}, {Pos::OTHER, "OTHER"},
};

}  // namespace

std::string_view pos_name(Pos pos) {
  for (const auto &[p, name] : kPosNames) {
    if (p == pos) return name;
  }
  return "OTHER";
}

std::optional<Pos> parse_pos(std::string_view name) {
  for (const auto &[p, n] : kPosNames) {
    if (n == name) return p;
  }
  return std::nullopt;
}

std::string TaggedSentence::reconstruct() const {
  std::string out;
  for (const auto &t : tokens) out += t.separator + t.text;
  return out;
}

// ---------------------------------------------------------------------------
// Lexicon
// ---------------------------------------------------------------------------

TaggerLexicon TaggerLexicon::defaults() {
  TaggerLexicon lex;
  auto put = [&lex](Pos pos, std::initializer_list<const char *> words) {
    for (const char *w : words) lex.words[w] = pos;
  };
  put(Pos::ADP, {"of", "in", "on", "for", "with", "without", "by", "from", "to", "at",
                 "into", "onto", "over", "under", "between", "than", "per", "via",
                 "within", "through", "across", "against", "along", "among", "around",
                 "about", "above", "below", "beneath", "except", "including",
                 "excluding", "like", "upon", "towards", "toward", "whose"});
  put(Pos::CCONJ, {"and", "or", "nor", "but", "whether", "and/or"});
  put(Pos::DET, {"a", "an", "the", "this", "that", "these", "those", "each", "every",
                 "any", "some", "no", "such", "all", "both", "which"});
  put(Pos::PRON, {"it", "they", "them", "their", "its", "itself", "themselves"});
  put(Pos::PART, {"not", "only"});
  put(Pos::OTHER, {"thereof", "therefor", "therewith", "whereof", "also", "so",
                   "mainly", "solely", "principally", "wholly", "partly", "chiefly"});
  put(Pos::VERB, {"is", "are", "be", "been", "being", "was", "were", "has", "have",
                  "made", "built", "known", "held", "worn", "sold", "put", "cut",
                  "used", "fitted", "mounted", "designed", "operated", "presented",
                  "exceeding", "containing", "incorporating", "having", "consisting"});
  put(Pos::ADJ, {"other", "electric", "electrical", "mechanical", "hydraulic",
                 "pneumatic", "portable", "similar", "new", "old", "domestic",
                 "industrial", "conical", "cylindrical", "spherical", "flat", "red",
                 "white", "black", "natural", "synthetic", "artificial", "raw",
                 "fresh", "frozen", "dried", "single", "double", "combined",
                 "tapered", "finned", "refined", "unrefined", "knitted", "crocheted"});
  put(Pos::NOUN, {"bearing", "casing", "packing", "clothing", "building", "fitting",
                  "housing", "lining", "tubing", "piping", "wiring", "ceiling",
                  "string", "spring", "ring", "thing", "wing", "bedding", "awning",
                  "roofing", "flooring", "heading", "filling", "conditioning",
                  "lighting", "plumbing", "assembly", "supply", "family", "poly",
                  "jelly", "belly", "anomaly", "bed", "seed", "speed", "feed", "shed",
                  "sled", "casting", "forging", "stamping", "mounting", "steering",
                  "coating", "welding", "printing", "machinery", "equipment"});
  put(Pos::NUM, {"one", "two", "three", "four", "five", "six", "seven", "eight", "nine",
                 "ten", "hundred", "thousand", "half", "quarter"});
  lex.suffix_rules = {{"ing", Pos::VERB}, {"ed", Pos::VERB}, {"ly", Pos::OTHER}};
  return lex;
}

TaggerLexicon TaggerLexicon::from_json(const nlohmann::json &j) {
  TaggerLexicon lex = defaults();
  if (j.contains("lexicon")) {
    for (const auto &[word, tag] : j["lexicon"].items()) {
      auto pos = parse_pos(tag.get<std::string>());
      if (!pos) throw Error(ErrorCode::FormatError, "unknown tag '" + tag.get<std::string>() + "'");
      lex.words[to_lower(word)] = *pos;
    }
  }
  if (j.contains("suffix_rules")) {
    lex.suffix_rules.clear();
    for (const auto &r : j["suffix_rules"]) {
      auto pos = parse_pos(r.at("tag").get<std::string>());
      if (!pos) throw Error(ErrorCode::FormatError, "unknown tag in suffix rule");
      lex.suffix_rules.push_back({r.at("suffix").get<std::string>(), *pos});
    }
  }
  return lex;
}

nlohmann::json TaggerLexicon::to_json() const {
  nlohmann::json words_json = nlohmann::json::object();
  for (const auto &[w, p] : words) words_json[w] = pos_name(p);
  nlohmann::json rules = nlohmann::json::array();
  for (const auto &r : suffix_rules) rules.push_back({{"suffix", r.suffix}, {"tag", pos_name(r.pos)}});
  return {{"lexicon", words_json}, {"suffix_rules", rules}};
}

// ---------------------------------------------------------------------------
// Tagger
// ---------------------------------------------------------------------------

namespace {

bool is_digit(char c) { return std::isdigit(static_cast<unsigned char>(c)) != 0; }

bool is_word_char(std::string_view s, std::size_t i) {
  const char c = s[i];
  if (std::isalnum(static_cast<unsigned char>(c))) return true;
  if (c == '-' || c == '/' || c == '\'' || c == '%' || c == '&' || c == '+') return true;
  // Decimal point inside a number.
  if ((c == '.' || c == ',') && i > 0 && i + 1 < s.size() && is_digit(s[i - 1]) &&
      is_digit(s[i + 1])) {
    return true;
  }
  return false;
}

bool is_numeric(const std::string &w) {
  bool digit = false;
  for (char c : w) {
    if (is_digit(c)) {
      digit = true;
    } else if (c != '/' && c != '.' && c != ',' && c != '%' && c != '-') {
      return false;
    }
  }
  return digit;
}

Pos tag_word(const std::string &w, const TaggerLexicon &lex) {
  if (auto it = lex.words.find(w); it != lex.words.end()) return it->second;
  if (is_numeric(w)) return Pos::NUM;
  for (const auto &rule : lex.suffix_rules) {
    if (w.size() > rule.suffix.size() + 2 && w.ends_with(rule.suffix)) return rule.pos;
  }
  return Pos::NOUN;
}

}  // namespace

TaggedSentence pos_tag(std::string_view text, const TaggerLexicon &lexicon) {
  TaggedSentence out;
  out.source = collapse_whitespace(to_lower(text));
  const std::string_view s = out.source;
  std::size_t i = 0;
  std::size_t last_end = 0;
  while (i < s.size()) {
    if (s[i] == ' ') {
      ++i;
      continue;
    }
    Token tok;
    tok.separator = std::string(s.substr(last_end, i - last_end));
    tok.index = out.tokens.size();
    if (is_word_char(s, i)) {
      const auto start = i;
      while (i < s.size() && is_word_char(s, i)) ++i;
      tok.text = std::string(s.substr(start, i - start));
      tok.pos = tag_word(tok.text, lexicon);
    } else {
      tok.text = std::string(1, s[i]);
      tok.pos = Pos::PUNCT;
      ++i;
    }
    last_end = i;
    out.tokens.push_back(std::move(tok));
  }
  return out;
}

TaggedSentence parse_pretagged(std::string_view text) {
  TaggedSentence out;
  for (const auto &item : split_whitespace(text)) {
    const auto slash = item.rfind('/');
    if (slash == std::string::npos || slash == 0 || slash + 1 == item.size()) {
      throw Error(ErrorCode::FormatError, "expected token/TAG, got '" + item + "'");
    }
    auto pos = parse_pos(item.substr(slash + 1));
    if (!pos) throw Error(ErrorCode::FormatError, "unknown tag in '" + item + "'");
    Token tok;
    tok.text = to_lower(item.substr(0, slash));
    tok.pos = *pos;
    tok.index = out.tokens.size();
    tok.separator = out.tokens.empty() ? "" : " ";
    out.tokens.push_back(std::move(tok));
  }
  out.source = out.reconstruct();
  return out;
}

// ---------------------------------------------------------------------------
// Rules
// ---------------------------------------------------------------------------

ExtractionRuleSet ExtractionRuleSet::defaults() {
  ExtractionRuleSet r;
  r.unit_nouns = {"horsepower", "hp",     "kw",     "w",      "v",      "kv",     "mm",
                  "cm",         "m",      "km",     "kg",     "kgs",    "g",      "t",
                  "tonne",      "tonnes", "ton",    "tons",   "l",      "litre",  "litres",
                  "liter",      "liters", "ml",     "watt",   "watts",  "volt",   "volts",
                  "ampere",     "amperes", "rpm",   "bar",    "mpa",    "kpa",    "degrees",
                  "percent",    "cc",     "cm3",    "m3",     "inch",   "inches", "kva",
                  "mw",         "kwh",    "mah",    "hz",     "khz",    "mhz",    "pieces"};
  return r;
}

namespace {

std::set<Pos> pos_set_from_json(const nlohmann::json &j) {
  std::set<Pos> out;
  for (const auto &t : j) {
    auto p = parse_pos(t.get<std::string>());
    if (!p) throw Error(ErrorCode::FormatError, "unknown tag '" + t.get<std::string>() + "'");
    out.insert(*p);
  }
  return out;
}

nlohmann::json pos_set_to_json(const std::set<Pos> &s) {
  nlohmann::json out = nlohmann::json::array();
  for (auto p : s) out.push_back(pos_name(p));
  return out;
}

}  // namespace

ExtractionRuleSet ExtractionRuleSet::from_json(const nlohmann::json &j) {
  ExtractionRuleSet r = defaults();
  if (j.contains("entity_tags")) r.entity_tags = pos_set_from_json(j["entity_tags"]);
  if (j.contains("head_tags")) r.head_tags = pos_set_from_json(j["head_tags"]);
  if (j.contains("clause_separators")) {
    r.clause_separators = j["clause_separators"].get<std::set<std::string>>();
  }
  if (j.contains("continuing_separators")) {
    r.continuing_separators = j["continuing_separators"].get<std::set<std::string>>();
  }
  if (j.contains("unit_nouns")) r.unit_nouns = j["unit_nouns"].get<std::set<std::string>>();
  if (j.contains("participle_suffixes")) {
    r.participle_suffixes = j["participle_suffixes"].get<std::vector<std::string>>();
  }
  r.optional_marker = j.value("optional_marker", r.optional_marker);
  r.coordinate_within_entity = j.value("coordinate_within_entity", r.coordinate_within_entity);
  r.gerund_after_adposition = j.value("gerund_after_adposition", r.gerund_after_adposition);
  return r;
}

nlohmann::json ExtractionRuleSet::to_json() const {
  return {{"entity_tags", pos_set_to_json(entity_tags)},
          {"head_tags", pos_set_to_json(head_tags)},
          {"clause_separators", clause_separators},
          {"continuing_separators", continuing_separators},
          {"unit_nouns", unit_nouns},
          {"participle_suffixes", participle_suffixes},
          {"optional_marker", optional_marker},
          {"coordinate_within_entity", coordinate_within_entity},
          {"gerund_after_adposition", gerund_after_adposition}};
}

Extractor Extractor::from_json(const nlohmann::json &j) {
  Extractor ex;
  ex.lexicon = TaggerLexicon::from_json(j);
  if (j.contains("rules")) ex.rules = ExtractionRuleSet::from_json(j["rules"]);
  return ex;
}

// ---------------------------------------------------------------------------
// Extraction
// ---------------------------------------------------------------------------

namespace {

enum class Role {
  Boundary,  // punctuation: ends a chunk, never part of a link
  Member,    // entity material without a head (modifiers)
  Head,      // entity head
  Link,      // connective material between entities
  Dropped,   // standalone numbers
  Coord,     // conjunction that may join two entity members
};

struct ClauseResult {
  std::vector<EntitySpan> entities;
  std::vector<std::pair<std::size_t, std::size_t>> links;  // token range of leading link
};

class ClauseChunker {
 public:
  ClauseChunker(const std::vector<Token> &tokens, const ExtractionRuleSet &rules)
      : tokens_(tokens), rules_(rules) {}

  std::vector<Role> roles(std::size_t begin, std::size_t end) const {
    const auto n = end - begin;
    std::vector<Role> role(n, Role::Link);
    auto tok = [&](std::size_t i) -> const Token & { return tokens_[begin + i]; };
    auto is_unit = [&](std::size_t i) {
      return i < n && rules_.unit_nouns.count(tok(i).text) != 0;
    };
    auto entity_class = [&](std::size_t i) {
      if (i >= n) return false;
      const auto pos = tok(i).pos;
      if (pos == Pos::NUM) return is_unit(i + 1) || (i > 0 && is_unit(i - 1));
      return rules_.entity_tags.count(pos) != 0;
    };
    auto participle = [&](std::size_t i) {
      if (tok(i).pos != Pos::VERB) return false;
      return std::any_of(rules_.participle_suffixes.begin(), rules_.participle_suffixes.end(),
                         [&](const std::string &s) {
                           return tok(i).text.size() > s.size() + 2 && tok(i).text.ends_with(s);
                         });
    };

    // Participles directly in front of nominal material act as modifiers
    // ("ventilating or recycling hoods", "wheeled chassis").
    std::vector<bool> modifier(n + 2, false);
    for (std::size_t k = n; k-- > 0;) {
      if (!participle(k)) continue;
      const bool next_nominal = entity_class(k + 1) || (k + 1 < n && modifier[k + 1]);
      const bool coordinated = k + 2 < n && tok(k + 1).pos == Pos::CCONJ &&
                               (entity_class(k + 2) || modifier[k + 2]);
      modifier[k] = next_nominal || coordinated;
    }

    for (std::size_t k = 0; k < n; ++k) {
      const auto &t = tok(k);
      if (t.pos == Pos::PUNCT) {
        role[k] = Role::Boundary;
      } else if (t.pos == Pos::NUM) {
        role[k] = entity_class(k) ? Role::Member : Role::Dropped;
      } else if (modifier[k]) {
        role[k] = Role::Member;
      } else if (participle(k) && rules_.gerund_after_adposition && k > 0 &&
                 tok(k - 1).pos == Pos::ADP) {
        role[k] = Role::Head;  // "for towing"
      } else if (rules_.head_tags.count(t.pos)) {
        role[k] = Role::Head;
      } else if (rules_.entity_tags.count(t.pos)) {
        role[k] = Role::Member;
      } else if (t.pos == Pos::CCONJ) {
        role[k] = Role::Coord;
      }
    }
    if (rules_.coordinate_within_entity) {
      for (std::size_t k = 1; k + 1 < n; ++k) {
        if (role[k] != Role::Coord) continue;
        const bool left = role[k - 1] == Role::Member || role[k - 1] == Role::Head;
        const bool right = role[k + 1] == Role::Member || role[k + 1] == Role::Head;
        if (left && right) role[k] = Role::Member;
      }
    }
    for (auto &r : role) {
      if (r == Role::Coord) r = Role::Link;
    }
    return role;
  }

 private:
  const std::vector<Token> &tokens_;
  const ExtractionRuleSet &rules_;
};

std::string span_text(const std::vector<Token> &tokens, std::size_t begin, std::size_t end) {
  std::string out;
  for (std::size_t i = begin; i < end; ++i) {
    if (i > begin) out += tokens[i].separator.empty() ? "" : " ";
    out += tokens[i].text;
  }
  return out;
}

bool starts_with_phrase(const std::vector<Token> &tokens, std::size_t begin, std::size_t end,
                        const std::vector<std::string> &phrase) {
  if (phrase.empty() || end - begin < phrase.size()) return false;
  for (std::size_t i = 0; i < phrase.size(); ++i) {
    if (tokens[begin + i].text != phrase[i]) return false;
  }
  return true;
}

}  // namespace

ExtractionResult extract(const TaggedSentence &tagged, const ExtractionRuleSet &rules) {
  const auto &tokens = tagged.tokens;
  ExtractionResult out;
  if (tokens.empty()) throw Error(ErrorCode::NoEntities, "empty sentence");

  // Clause boundaries.
  std::vector<std::pair<std::size_t, std::size_t>> clauses;
  std::size_t start = 0;
  for (std::size_t i = 0; i <= tokens.size(); ++i) {
    if (i == tokens.size() || rules.clause_separators.count(tokens[i].text)) {
      if (i > start) clauses.emplace_back(start, i);
      start = i + 1;
    }
  }

  const auto marker = split_whitespace(rules.optional_marker);
  ClauseChunker chunker(tokens, rules);
  std::optional<std::size_t> previous_last;  // last entity of the preceding clause

  for (const auto &[cb, ce] : clauses) {
    const auto role = chunker.roles(cb, ce);
    const bool marked = starts_with_phrase(tokens, cb, ce, marker);
    // "X, including Y": a comma clause opening with link words hangs off
    // the previous clause's last entity.
    const bool leading_link = cb > 0 && rules.continuing_separators.count(tokens[cb - 1].text) &&
                              role.front() == Role::Link;
    const bool continuation = marked || leading_link;

    std::vector<std::string> pending;  // link words since the last entity
    std::optional<std::size_t> last = continuation ? previous_last : std::nullopt;
    bool optional_link = marked;

    std::size_t k = cb;
    while (k < ce) {
      const auto r = role[k - cb];
      if (r == Role::Member || r == Role::Head) {
        auto e = k;
        bool has_head = false;
        while (e < ce && (role[e - cb] == Role::Member || role[e - cb] == Role::Head)) {
          has_head = has_head || role[e - cb] == Role::Head;
          ++e;
        }
        if (!has_head) {
          // Modifier run without a noun: treat as connective text.
          for (auto i = k; i < e; ++i) pending.push_back(tokens[i].text);
          k = e;
          continue;
        }
        out.entities.push_back({k, e, span_text(tokens, k, e)});
        const auto id = out.entities.size() - 1;
        if (last && !pending.empty()) {
          out.relations.push_back({*last, id, join(pending, " "), optional_link});
        }
        optional_link = false;
        pending.clear();
        last = id;
        k = e;
        continue;
      }
      if (r == Role::Link) pending.push_back(tokens[k].text);
      ++k;
    }
    if (last) previous_last = last;
  }

  if (out.entities.empty()) {
    throw Error(ErrorCode::NoEntities, "no noun chunk in '" + tagged.source + "'");
  }
  return out;
}

}  // namespace hscode
