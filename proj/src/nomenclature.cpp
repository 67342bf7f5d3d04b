#include "hscode/nomenclature.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <functional>
#include <set>
#include <sstream>

#include "hscode/error.hpp"
#include "hscode/text_util.hpp"

namespace hscode {

// ---------------------------------------------------------------------------
// HsCode
// ---------------------------------------------------------------------------

std::optional<HsCode> HsCode::try_parse(std::string_view text) {
  std::string digits;
  for (char c : text) {
    if (c == '.') continue;
    if (!std::isdigit(static_cast<unsigned char>(c))) return std::nullopt;
    digits.push_back(c);
  }
  const auto n = digits.size();
  if (n != 2 && n != 4 && n != 6 && n != 8) return std::nullopt;
  return HsCode(std::move(digits));
}

HsCode HsCode::parse(std::string_view text) {
  auto code = try_parse(text);
  if (!code) {
    throw Error(ErrorCode::InvalidCode,
                "'" + std::string(text) + "' is not a 2/4/6/8-digit code");
  }
  return *code;
}

std::string HsCode::display() const {
  switch (digits_.size()) {
    case 6: return digits_.substr(0, 4) + "." + digits_.substr(4, 2);
    case 8:
      return digits_.substr(0, 4) + "." + digits_.substr(4, 2) + "." +
             digits_.substr(6, 2);
    default: return digits_;
  }
}

HsCode HsCode::truncate(Level level) const {
  const auto n = static_cast<std::size_t>(level);
  if (n > digits_.size()) {
    throw Error(ErrorCode::LevelNotBelowParent,
                "cannot truncate " + digits_ + " to " +
                    std::to_string(n) + " digits");
  }
  return HsCode(digits_.substr(0, n));
}

bool HsCode::is_ancestor_of(const HsCode &other) const {
  return digits_.size() < other.digits_.size() &&
         other.digits_.compare(0, digits_.size(), digits_) == 0;
}

std::string_view level_name(Level level) {
  switch (level) {
    case Level::Chapter: return "chapter";
    case Level::Heading: return "heading";
    case Level::Subheading: return "subheading";
    case Level::Full: return "full";
  }
  return "unknown";
}

// ---------------------------------------------------------------------------
// TariffNode / TariffSchedule
// ---------------------------------------------------------------------------

bool TariffNode::is_grouping() const {
  return !code && !statistical_suffix && !description.empty() &&
         description.back() == ':';
}

bool operator==(const TariffNode &a, const TariffNode &b) {
  return a.code == b.code && a.code_text == b.code_text &&
         a.statistical_suffix == b.statistical_suffix &&
         a.description == b.description && a.children == b.children;
}

TariffSchedule::TariffSchedule(std::vector<TariffNode> roots,
                               std::vector<ParseWarning> warnings)
    : roots_(std::move(roots)), warnings_(std::move(warnings)) {
  rebuild_index();
}

TariffSchedule::TariffSchedule(const TariffSchedule &other)
    : roots_(other.roots_), warnings_(other.warnings_) {
  rebuild_index();
}

TariffSchedule &TariffSchedule::operator=(const TariffSchedule &other) {
  if (this != &other) {
    roots_ = other.roots_;
    warnings_ = other.warnings_;
    rebuild_index();
  }
  return *this;
}

void TariffSchedule::rebuild_index() {
  index_.clear();
  order_.clear();
  std::function<void(const TariffNode &)> visit = [&](const TariffNode &node) {
    if (node.code) {
      auto [it, inserted] = index_.emplace(node.code->digits(), &node);
      if (!inserted) {
        throw Error(ErrorCode::DuplicateCode, node.code->display());
      }
      order_.push_back(node.code->digits());
    }
    for (const auto &child : node.children) visit(child);
  };
  for (const auto &root : roots_) visit(root);
}

const TariffNode *TariffSchedule::find(const HsCode &code) const {
  auto it = index_.find(code.digits());
  return it == index_.end() ? nullptr : it->second;
}

const TariffNode &TariffSchedule::at(const HsCode &code) const {
  const auto *node = find(code);
  if (!node) throw Error(ErrorCode::UnknownCode, code.display());
  return *node;
}

std::vector<HsCode> TariffSchedule::codes() const {
  std::vector<HsCode> out;
  out.reserve(order_.size());
  for (const auto &digits : order_) out.push_back(HsCode::parse(digits));
  return out;
}

std::vector<HsCode> TariffSchedule::headings() const {
  std::vector<HsCode> out;
  for (const auto &digits : order_) {
    if (digits.size() == 4) out.push_back(HsCode::parse(digits));
  }
  return out;
}

std::vector<const TariffNode *> TariffSchedule::coded_ancestors(
    const HsCode &code) const {
  std::vector<const TariffNode *> out;
  for (auto level : {Level::Chapter, Level::Heading, Level::Subheading}) {
    if (static_cast<std::size_t>(level) >= code.digits().size()) break;
    if (const auto *node = find(code.truncate(level))) out.push_back(node);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Parser
// ---------------------------------------------------------------------------

namespace {

struct Draft {
  TariffNode node;  // children left empty until materialized
  std::vector<std::size_t> children;
};

[[noreturn]] void fail(ErrorCode code, std::size_t line,
                       const std::string &what) {
  throw Error(code, "line " + std::to_string(line) + ": " + what);
}

// Splits a leading two-digit statistical suffix ("00 Vacuum pumps").
std::pair<std::optional<std::string>, std::string> split_suffix(
    const std::string &body) {
  if (body.size() > 3 && std::isdigit(static_cast<unsigned char>(body[0])) &&
      std::isdigit(static_cast<unsigned char>(body[1])) && body[2] == ' ') {
    return {body.substr(0, 2), trim(body.substr(3))};
  }
  return {std::nullopt, body};
}

TariffNode materialize(std::vector<Draft> &drafts, std::size_t id) {
  TariffNode node = std::move(drafts[id].node);
  for (auto child : drafts[id].children) {
    node.children.push_back(materialize(drafts, child));
  }
  return node;
}

}  // namespace

TariffSchedule parse_schedule(std::string_view text,
                              const ParseOptions &options) {
  std::vector<Draft> drafts;
  std::vector<std::size_t> roots;
  std::map<std::string, std::size_t> by_code;
  std::vector<ParseWarning> warnings;

  std::optional<std::size_t> current;  // most recent coded line
  struct OpenGroup {
    std::size_t id;
    std::size_t depth;
  };
  std::vector<OpenGroup> groups;

  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    auto end = text.find('\n', pos);
    if (end == std::string_view::npos) end = text.size();
    std::string line(text.substr(pos, end - pos));
    pos = end + 1;
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (trim(line).empty()) {
      if (end == text.size()) break;
      continue;
    }

    const auto tab = line.find('\t');
    if (tab == std::string::npos) {
      fail(ErrorCode::MalformedLine, line_no, "expected CODE<TAB>DESCRIPTION");
    }
    const std::string code_field = trim(line.substr(0, tab));
    const std::string rest = line.substr(tab + 1);

    std::size_t depth = 0;
    std::size_t spaces = 0;
    for (char c : rest) {
      if (c == '\t') {
        ++depth;
      } else if (c == ' ') {
        if (++spaces == 2) {
          ++depth;
          spaces = 0;
        }
      } else {
        break;
      }
    }
    const std::string body = collapse_whitespace(rest);
    if (body.empty()) fail(ErrorCode::MalformedLine, line_no, "empty description");

    if (!code_field.empty()) {
      auto code = HsCode::try_parse(code_field);
      if (!code) {
        fail(ErrorCode::MalformedLine, line_no,
             "unparseable code '" + code_field + "'");
      }
      if (by_code.count(code->digits())) {
        fail(ErrorCode::DuplicateCode, line_no, code->display());
      }
      Draft draft;
      draft.node.code = *code;
      draft.node.code_text = code_field;
      if (code->level() == Level::Full) {
        auto [suffix, desc] = split_suffix(body);
        draft.node.statistical_suffix = suffix;
        draft.node.description = desc;
      } else {
        draft.node.description = body;
      }
      if (draft.node.description.empty()) {
        fail(ErrorCode::MalformedLine, line_no, "empty description");
      }

      std::optional<std::size_t> parent;
      for (auto level : {Level::Subheading, Level::Heading, Level::Chapter}) {
        if (static_cast<std::size_t>(level) >= code->digits().size()) continue;
        auto it = by_code.find(code->truncate(level).digits());
        if (it != by_code.end()) {
          parent = it->second;
          break;
        }
      }
      const auto id = drafts.size();
      drafts.push_back(std::move(draft));
      if (parent) {
        drafts[*parent].children.push_back(id);
      } else if (code->level() <= Level::Heading) {
        roots.push_back(id);
      } else {
        fail(ErrorCode::OrphanCode, line_no,
             code->display() + " has no chapter or heading above it");
      }
      by_code.emplace(code->digits(), id);
      current = id;
      groups.clear();
      continue;
    }

    // Uncoded line: statistical sub-line or grouping line.
    if (!current) {
      fail(ErrorCode::OrphanCode, line_no,
           "sub-line appears before any coded line");
    }
    auto [suffix, desc] = split_suffix(body);
    const bool opens_group = desc.back() == ':';
    if (!suffix && !opens_group) {
      if (options.strict) {
        fail(ErrorCode::MalformedLine, line_no,
             "uncoded line has neither a statistical suffix nor a ':'");
      }
      warnings.push_back(
          {line_no, "unsuffixed sub-line '" + desc + "' kept as statistical leaf"});
    }
    // A grouping line that has not received any line yet owns this one,
    // even when this one opens a group of its own.
    while (!groups.empty() &&
           (groups.back().depth > depth ||
            (opens_group && groups.back().depth == depth &&
             !drafts[groups.back().id].children.empty()))) {
      groups.pop_back();
    }
    Draft draft;
    draft.node.statistical_suffix = suffix;
    draft.node.description = desc;
    const auto id = drafts.size();
    drafts.push_back(std::move(draft));
    const auto owner = groups.empty() ? *current : groups.back().id;
    drafts[owner].children.push_back(id);
    if (opens_group) groups.push_back({id, depth});
  }

  std::vector<TariffNode> out;
  out.reserve(roots.size());
  for (auto id : roots) out.push_back(materialize(drafts, id));
  return TariffSchedule(std::move(out), std::move(warnings));
}

// ---------------------------------------------------------------------------
// Structural queries
// ---------------------------------------------------------------------------

namespace {

std::string part_text(const std::string &description) {
  std::string s = trim(description);
  while (!s.empty() && (s.back() == ':' || s.back() == ' ')) s.pop_back();
  return s;
}

std::string join_parts(const std::vector<std::string> &parts) {
  std::string out;
  for (const auto &p : parts) {
    if (p.empty()) continue;
    if (!out.empty()) out += "; ";
    out += p;
  }
  return out;
}

std::vector<std::string> ancestor_parts(const TariffSchedule &schedule,
                                        const HsCode &code) {
  std::vector<std::string> parts;
  for (const auto *node : schedule.coded_ancestors(code)) {
    if (node->code->level() == Level::Chapter) continue;
    parts.push_back(part_text(node->description));
  }
  return parts;
}

}  // namespace

std::string composed_description(const TariffSchedule &schedule,
                                 const HsCode &code) {
  const auto &node = schedule.at(code);
  auto parts = ancestor_parts(schedule, code);
  parts.push_back(part_text(node.description));
  return join_parts(parts);
}

std::vector<CodeDescription> codes_under(const TariffSchedule &schedule,
                                         const HsCode &parent, Level level) {
  const auto &root = schedule.at(parent);
  if (level <= parent.level()) {
    throw Error(ErrorCode::LevelNotBelowParent,
                parent.display() + " is already at or below " +
                    std::string(level_name(level)));
  }

  // Coded descendants, in document order, that reach at least `level`.
  std::vector<const TariffNode *> deep;
  std::function<void(const TariffNode &)> visit = [&](const TariffNode &node) {
    for (const auto &child : node.children) {
      if (child.code && child.code->level() >= level) deep.push_back(&child);
      visit(child);
    }
  };
  visit(root);

  std::vector<CodeDescription> out;
  std::set<std::string> seen;
  for (const auto *node : deep) {
    const auto key = node->code->truncate(level);
    if (!seen.insert(key.digits()).second) continue;
    if (schedule.contains(key)) {
      out.push_back({key, composed_description(schedule, key)});
      continue;
    }
    // No line for the class itself: use the shallowest coded lines below it.
    auto parts = ancestor_parts(schedule, key);
    std::vector<std::string> own;
    for (const auto *other : deep) {
      if (other->code->truncate(level) != key) continue;
      bool shallowest = true;
      for (const auto *anc : schedule.coded_ancestors(*other->code)) {
        if (anc->code->level() > level) shallowest = false;
      }
      if (shallowest) own.push_back(part_text(other->description));
    }
    parts.insert(parts.end(), own.begin(), own.end());
    out.push_back({key, join_parts(parts)});
  }
  return out;
}

// ---------------------------------------------------------------------------
// JSON
// ---------------------------------------------------------------------------

nlohmann::json node_to_json(const TariffNode &node) {
  nlohmann::json j;
  j["code"] = node.code ? nlohmann::json(node.code_text) : nlohmann::json();
  if (node.statistical_suffix) j["statistical_suffix"] = *node.statistical_suffix;
  j["description"] = node.description;
  j["children"] = nlohmann::json::array();
  for (const auto &child : node.children) j["children"].push_back(node_to_json(child));
  return j;
}

nlohmann::json schedule_to_json(const TariffSchedule &schedule) {
  nlohmann::json roots = nlohmann::json::array();
  for (const auto &root : schedule.roots()) roots.push_back(node_to_json(root));
  return {{"roots", std::move(roots)}};
}

namespace {

TariffNode node_from_json(const nlohmann::json &j) {
  if (!j.is_object() || !j.contains("description")) {
    throw Error(ErrorCode::FormatError, "schedule node without description");
  }
  TariffNode node;
  if (j.contains("code") && !j["code"].is_null()) {
    node.code_text = j["code"].get<std::string>();
    node.code = HsCode::parse(node.code_text);
  }
  if (j.contains("statistical_suffix")) {
    node.statistical_suffix = j["statistical_suffix"].get<std::string>();
  }
  node.description = collapse_whitespace(j["description"].get<std::string>());
  if (node.description.empty()) {
    throw Error(ErrorCode::FormatError, "schedule node with empty description");
  }
  if (j.contains("children")) {
    for (const auto &child : j["children"]) {
      auto c = node_from_json(child);
      if (node.code && c.code && !node.code->is_ancestor_of(*c.code)) {
        throw Error(ErrorCode::OrphanCode,
                    c.code->display() + " is not below " + node.code->display());
      }
      node.children.push_back(std::move(c));
    }
  }
  return node;
}

}  // namespace

TariffSchedule schedule_from_json(const nlohmann::json &json) {
  if (!json.is_object() || !json.contains("roots") || !json["roots"].is_array()) {
    throw Error(ErrorCode::FormatError, "schedule JSON needs a 'roots' array");
  }
  std::vector<TariffNode> roots;
  for (const auto &r : json["roots"]) roots.push_back(node_from_json(r));
  return TariffSchedule(std::move(roots));
}

TariffSchedule load_schedule_file(const std::string &path,
                                  const ParseOptions &options) {
  const std::string text = read_file(path);
  const auto first = text.find_first_not_of(" \t\r\n");
  if (first != std::string::npos && (text[first] == '{' || text[first] == '[')) {
    try {
      return schedule_from_json(nlohmann::json::parse(text));
    } catch (const nlohmann::json::exception &e) {
      throw Error(ErrorCode::FormatError, path + ": " + e.what());
    }
  }
  return parse_schedule(text, options);
}

}  // namespace hscode
