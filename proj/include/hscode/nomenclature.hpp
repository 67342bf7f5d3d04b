#pragma once

#include <cstddef>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

namespace hscode {

enum class Level : int { Chapter = 2, Heading = 4, Subheading = 6, Full = 8 };

// A validated 2/4/6/8-digit Harmonized System code. Dots are accepted on
// input ("8414.30.40") and stripped; `display()` restores the dotted form.
class HsCode {
 public:
  // Throws InvalidCode for anything that is not 2/4/6/8 digits after
  // removing dots.
  static HsCode parse(std::string_view text);
  static std::optional<HsCode> try_parse(std::string_view text);

  const std::string &digits() const { return digits_; }
  Level level() const { return static_cast<Level>(digits_.size()); }
  std::string display() const;

  // Ancestor at a coarser level. Throws LevelNotBelowParent when `level`
  // is deeper than this code.
  HsCode truncate(Level level) const;
  bool is_ancestor_of(const HsCode &other) const;

  friend bool operator==(const HsCode &, const HsCode &) = default;
  friend auto operator<=>(const HsCode &, const HsCode &) = default;

 private:
  explicit HsCode(std::string digits) : digits_(std::move(digits)) {}
  std::string digits_;
};

std::string_view level_name(Level level);

// One line of the schedule. Coded lines carry an HsCode; statistical
// sub-lines and grouping lines ("Screw type:") do not.
struct TariffNode {
  std::optional<HsCode> code;
  // Raw code text as written in the source ("8414.30.40"). Empty for
  // uncoded lines.
  std::string code_text;
  std::optional<std::string> statistical_suffix;
  std::string description;
  std::vector<TariffNode> children;

  bool is_coded() const { return code.has_value(); }
  // Uncoded line with no suffix that ends in ':'.
  bool is_grouping() const;

  friend bool operator==(const TariffNode &, const TariffNode &);
};

struct ParseOptions {
  // Strict mode rejects bare uncoded lines that are neither a grouping
  // line nor a suffixed statistical line. Lenient mode keeps them as
  // statistical leaves and records a warning.
  bool strict = false;
};

struct ParseWarning {
  std::size_t line = 0;
  std::string message;
};

class TariffSchedule {
 public:
  TariffSchedule() = default;
  explicit TariffSchedule(std::vector<TariffNode> roots,
                          std::vector<ParseWarning> warnings = {});

  TariffSchedule(const TariffSchedule &other);
  TariffSchedule &operator=(const TariffSchedule &other);
  TariffSchedule(TariffSchedule &&) noexcept = default;
  TariffSchedule &operator=(TariffSchedule &&) noexcept = default;

  const std::vector<TariffNode> &roots() const { return roots_; }
  const std::vector<ParseWarning> &warnings() const { return warnings_; }
  std::size_t size() const { return index_.size(); }

  const TariffNode *find(const HsCode &code) const;
  const TariffNode &at(const HsCode &code) const;
  bool contains(const HsCode &code) const { return find(code) != nullptr; }

  // Every indexed code in document order.
  std::vector<HsCode> codes() const;
  std::vector<HsCode> headings() const;

  // Coded ancestors of `code` from the outermost down to (excluding) the
  // node itself.
  std::vector<const TariffNode *> coded_ancestors(const HsCode &code) const;

  friend bool operator==(const TariffSchedule &a, const TariffSchedule &b) {
    return a.roots_ == b.roots_;
  }

 private:
  void rebuild_index();

  std::vector<TariffNode> roots_;
  std::vector<ParseWarning> warnings_;
  std::map<std::string, const TariffNode *> index_;
  std::vector<std::string> order_;
};

TariffSchedule parse_schedule(std::string_view text,
                              const ParseOptions &options = {});

struct CodeDescription {
  HsCode code;
  std::string description;
};

// Descendants of `parent` at `level`, each with its description composed
// from the heading text, intermediate coded ancestors, and its own text.
// A 6-digit class that only exists through its 8-digit ".00" lines is
// reported under its 6-digit truncation.
std::vector<CodeDescription> codes_under(const TariffSchedule &schedule,
                                         const HsCode &parent, Level level);

// Composed description for any indexed code.
std::string composed_description(const TariffSchedule &schedule,
                                 const HsCode &code);

nlohmann::json schedule_to_json(const TariffSchedule &schedule);
TariffSchedule schedule_from_json(const nlohmann::json &json);
nlohmann::json node_to_json(const TariffNode &node);

// Reads either the tab-separated grammar or the canonical JSON tree,
// chosen by the first non-space character of the file.
TariffSchedule load_schedule_file(const std::string &path,
                                  const ParseOptions &options = {});

}  // namespace hscode
