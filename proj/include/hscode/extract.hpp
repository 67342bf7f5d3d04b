#pragma once

#include <cstddef>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

namespace hscode {

enum class Pos { NOUN, PROPN, PRON, ADJ, VERB, ADP, CCONJ, DET, NUM, PART, PUNCT, OTHER };

std::string_view pos_name(Pos pos);
std::optional<Pos> parse_pos(std::string_view name);

struct Token {
  std::string text;
  Pos pos = Pos::OTHER;
  std::size_t index = 0;
  std::string separator;  // source text between the previous token and this one

  friend bool operator==(const Token &, const Token &) = default;
};

struct TaggedSentence {
  std::vector<Token> tokens;
  std::string source;  // normalized source text

  std::string reconstruct() const;
};

struct SuffixRule {
  std::string suffix;
  Pos pos = Pos::VERB;
};

// Word -> tag lexicon plus ordered suffix rules. The built-in closed-class
// words are always present; the domain part can be replaced from a file.
struct TaggerLexicon {
  std::map<std::string, Pos> words;
  std::vector<SuffixRule> suffix_rules;

  static TaggerLexicon defaults();
  // {"lexicon": {token: TAG}, "suffix_rules": [{"suffix": s, "tag": TAG}]}
  // merged over the defaults.
  static TaggerLexicon from_json(const nlohmann::json &json);
  nlohmann::json to_json() const;
};

// Splits normalized text into word and punctuation tokens and tags them:
// lexicon first, then suffix rules, then NOUN.
TaggedSentence pos_tag(std::string_view text, const TaggerLexicon &lexicon);

// "token/TAG token/TAG ..." bypass format.
TaggedSentence parse_pretagged(std::string_view text);

struct ExtractionRuleSet {
  std::set<Pos> entity_tags = {Pos::NOUN, Pos::PROPN, Pos::PRON, Pos::ADJ};
  std::set<Pos> head_tags = {Pos::NOUN, Pos::PROPN, Pos::PRON};
  std::set<std::string> clause_separators = {",", ";"};
  std::set<std::string> unit_nouns;
  std::vector<std::string> participle_suffixes = {"ing", "ed"};
  // A clause opening with this phrase continues the previous clause and
  // marks the link that crosses into it as optional.
  std::string optional_marker = "whether or not";
  // A clause after one of these that opens with link words continues the
  // previous clause.
  std::set<std::string> continuing_separators = {","};
  bool coordinate_within_entity = true;
  bool gerund_after_adposition = true;

  static ExtractionRuleSet defaults();
  static ExtractionRuleSet from_json(const nlohmann::json &json);
  nlohmann::json to_json() const;
};

struct EntitySpan {
  std::size_t begin = 0;  // token range [begin, end)
  std::size_t end = 0;
  std::string text;

  friend bool operator==(const EntitySpan &, const EntitySpan &) = default;
};

struct Relation {
  std::size_t subject = 0;  // index into entities
  std::size_t object = 0;
  std::string link;
  bool optional = false;

  friend bool operator==(const Relation &, const Relation &) = default;
};

struct ExtractionResult {
  std::vector<EntitySpan> entities;
  std::vector<Relation> relations;
};

// Throws NoEntities when no noun chunk is found.
ExtractionResult extract(const TaggedSentence &tagged, const ExtractionRuleSet &rules);

struct Extractor {
  TaggerLexicon lexicon = TaggerLexicon::defaults();
  ExtractionRuleSet rules = ExtractionRuleSet::defaults();

  ExtractionResult run(std::string_view text) const {
    return extract(pos_tag(text, lexicon), rules);
  }
  // Loads {"lexicon":..., "suffix_rules":..., "rules":...}.
  static Extractor from_json(const nlohmann::json &json);
};

}  // namespace hscode
