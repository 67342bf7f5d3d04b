#include <gtest/gtest.h>

#include <filesystem>
#include <functional>
#include <set>

#include "hscode/error.hpp"
#include "hscode/nomenclature.hpp"
#include "hscode/text_util.hpp"
#include "synthetic.hpp"

using namespace hscode;

namespace {

std::string data(const std::string &name) { return read_file(std::string(HSCODE_TEST_DATA) + "/" + name); }

template <typename F>
ErrorCode error_of(F &&f) {
  try {
    f();
  } catch (const Error &e) {
    return e.code();
  }
  ADD_FAILURE() << "expected an hscode::Error";
  return ErrorCode::FormatError;
}

std::vector<std::string> digits_of(const std::vector<CodeDescription> &list) {
  std::vector<std::string> out;
  for (const auto &c : list) out.push_back(c.code.digits());
  return out;
}

void collect_suffixes(const TariffNode &n, std::vector<std::string> &out) {
  for (const auto &c : n.children) {
    if (c.statistical_suffix && !c.code) out.push_back(*c.statistical_suffix);
    collect_suffixes(c, out);
  }
}

}  // namespace

TEST(HsCode, ParsesDottedAndPlainForms) {
  const auto c = HsCode::parse("8414.30.40");
  EXPECT_EQ(c.digits(), "84143040");
  EXPECT_EQ(c.level(), Level::Full);
  EXPECT_EQ(c.display(), "8414.30.40");
  EXPECT_EQ(HsCode::parse("841430").display(), "8414.30");
  EXPECT_EQ(HsCode::parse("8414").display(), "8414");
  EXPECT_EQ(HsCode::parse("84").level(), Level::Chapter);
}

TEST(HsCode, RejectsBadDigits) {
  for (const char *bad : {"", "8", "841", "84a4", "8414303", "841430401", "84-14"}) {
    EXPECT_EQ(error_of([&] { HsCode::parse(bad); }), ErrorCode::InvalidCode) << bad;
    EXPECT_FALSE(HsCode::try_parse(bad).has_value()) << bad;
  }
}

TEST(HsCode, TruncateYieldsAncestors) {
  const auto c = HsCode::parse("84143040");
  EXPECT_EQ(c.truncate(Level::Subheading).digits(), "841430");
  EXPECT_EQ(c.truncate(Level::Heading).digits(), "8414");
  EXPECT_EQ(c.truncate(Level::Chapter).digits(), "84");
  EXPECT_TRUE(HsCode::parse("8414").is_ancestor_of(c));
  EXPECT_FALSE(c.is_ancestor_of(c));
  EXPECT_FALSE(HsCode::parse("8415").is_ancestor_of(c));
  EXPECT_EQ(error_of([] { HsCode::parse("8414").truncate(Level::Subheading); }),
            ErrorCode::LevelNotBelowParent);
}

TEST(ParseSchedule, EmptyInputHasNoRoots) {
  EXPECT_TRUE(parse_schedule("").roots().empty());
  EXPECT_TRUE(parse_schedule("\n\n").roots().empty());
}

TEST(ParseSchedule, SingleHeadingLine) {
  const auto s = parse_schedule("8482\tBall or roller bearings");
  ASSERT_EQ(s.roots().size(), 1u);
  EXPECT_EQ(s.roots()[0].code->digits(), "8482");
  EXPECT_EQ(s.roots()[0].description, "Ball or roller bearings");
  EXPECT_TRUE(s.roots()[0].children.empty());
}

TEST(ParseSchedule, Heading8414Structure) {
  const auto s = parse_schedule(data("heading_8414.tsv"));
  ASSERT_EQ(s.roots().size(), 1u);
  const auto &heading = s.roots()[0];
  EXPECT_EQ(heading.code->digits(), "8414");
  std::vector<std::string> children;
  for (const auto &c : heading.children) children.push_back(c.code->digits());
  EXPECT_EQ(children, (std::vector<std::string>{"84141000", "84142000", "841430", "84144000"}));
  EXPECT_EQ(s.at(HsCode::parse("84141000")).description, "Vacuum pumps");
  EXPECT_EQ(s.at(HsCode::parse("84141000")).statistical_suffix, "00");

  const auto &n8430 = s.at(HsCode::parse("841430"));
  ASSERT_EQ(n8430.children.size(), 2u);
  EXPECT_EQ(n8430.children[0].code->digits(), "84143040");
  EXPECT_EQ(n8430.children[1].code->digits(), "84143080");
}

TEST(ParseSchedule, StatisticalLinesSitBelow84143080) {
  const auto s = parse_schedule(data("heading_8414.tsv"));
  std::vector<std::string> suffixes;
  collect_suffixes(s.at(HsCode::parse("84143080")), suffixes);
  EXPECT_EQ(suffixes, (std::vector<std::string>{"10", "20", "30", "50", "60", "70", "80", "90"}));
  // Every other coded line is a leaf.
  for (const char *leaf : {"84141000", "84142000", "84143040", "84144000"}) {
    EXPECT_TRUE(s.at(HsCode::parse(leaf)).children.empty()) << leaf;
  }
}

TEST(ParseSchedule, GroupingLinesOwnTheirSubLines) {
  const auto s = parse_schedule(data("heading_8414.tsv"));
  const auto &other = s.at(HsCode::parse("84143080"));
  ASSERT_EQ(other.children.size(), 3u);
  EXPECT_EQ(other.children[0].description, "Screw type:");
  EXPECT_TRUE(other.children[0].is_grouping());
  EXPECT_EQ(other.children[0].children.size(), 2u);
  // "Other:" directly followed by a suffixed group line owns it.
  EXPECT_EQ(other.children[1].description, "Other:");
  ASSERT_EQ(other.children[1].children.size(), 1u);
  EXPECT_EQ(other.children[1].children[0].statistical_suffix, "30");
}

TEST(ParseSchedule, BareSubLineIsWarningOrError) {
  const auto lenient = parse_schedule(data("heading_8414.tsv"));
  ASSERT_EQ(lenient.warnings().size(), 1u);
  EXPECT_EQ(lenient.warnings()[0].line, 12u);
  try {
    parse_schedule(data("heading_8414.tsv"), {.strict = true});
    FAIL() << "strict parse accepted a bare sub-line";
  } catch (const Error &e) {
    EXPECT_EQ(e.code(), ErrorCode::MalformedLine);
    EXPECT_NE(e.detail().find("line 12"), std::string::npos);
  }
}

TEST(ParseSchedule, GrammarErrors) {
  EXPECT_EQ(error_of([] { parse_schedule("8414 Air pumps"); }), ErrorCode::MalformedLine);
  EXPECT_EQ(error_of([] { parse_schedule("84x4\tAir pumps"); }), ErrorCode::MalformedLine);
  EXPECT_EQ(error_of([] { parse_schedule("8414\t   "); }), ErrorCode::MalformedLine);
  EXPECT_EQ(error_of([] { parse_schedule("8414\tA\n8414\tB"); }), ErrorCode::DuplicateCode);
  EXPECT_EQ(error_of([] { parse_schedule("8414.10\tOrphan"); }), ErrorCode::OrphanCode);
  EXPECT_EQ(error_of([] { parse_schedule("\t10 Sub-line first"); }), ErrorCode::OrphanCode);
}

TEST(ParseSchedule, MissingNodesNeverBreakTheIndex) {
  const auto s = parse_schedule(data("heading_8414.tsv"));
  EXPECT_EQ(s.find(HsCode::parse("841410")), nullptr);
  EXPECT_EQ(error_of([&] { s.at(HsCode::parse("9999")); }), ErrorCode::UnknownCode);
}

TEST(CodesUnder, Heading8414Subheadings) {
  const auto s = parse_schedule(data("heading_8414.tsv"));
  EXPECT_EQ(digits_of(codes_under(s, HsCode::parse("8414"), Level::Subheading)),
            (std::vector<std::string>{"841410", "841420", "841430", "841440"}));
  EXPECT_EQ(digits_of(codes_under(s, HsCode::parse("8414"), Level::Full)),
            (std::vector<std::string>{"84141000", "84142000", "84143040", "84143080",
                                      "84144000"}));
}

TEST(CodesUnder, ComposedDescriptionCarriesHeadingContext) {
  const auto s = parse_schedule(data("heading_8414.tsv"));
  const auto list = codes_under(s, HsCode::parse("8414"), Level::Subheading);
  const auto &d = list[2].description;
  EXPECT_EQ(list[2].code.digits(), "841430");
  EXPECT_NE(d.find("Compressors of a kind used in refrigerating equipment"), std::string::npos);
  EXPECT_NE(d.find("gas compressors"), std::string::npos);
  EXPECT_NE(list[0].description.find("Vacuum pumps"), std::string::npos);
  // "Other" only makes sense with its parent's text.
  const auto full = codes_under(s, HsCode::parse("841430"), Level::Full);
  EXPECT_NE(full[1].description.find("refrigerating equipment"), std::string::npos);
  EXPECT_NE(full[1].description.find("Other"), std::string::npos);
}

TEST(CodesUnder, Errors) {
  const auto s = parse_schedule(data("heading_8414.tsv"));
  EXPECT_EQ(error_of([&] { codes_under(s, HsCode::parse("841430"), Level::Subheading); }),
            ErrorCode::LevelNotBelowParent);
  EXPECT_EQ(error_of([&] { codes_under(s, HsCode::parse("8414"), Level::Heading); }),
            ErrorCode::LevelNotBelowParent);
  EXPECT_EQ(error_of([&] { codes_under(s, HsCode::parse("8415"), Level::Subheading); }),
            ErrorCode::UnknownCode);
}

// ---- properties over several schedules -------------------------------------

class ScheduleProperties : public ::testing::TestWithParam<std::string> {
 protected:
  TariffSchedule load() const {
    const auto &p = GetParam();
    if (p.rfind("synthetic:", 0) == 0) {
      hscode::testing::SyntheticSpec spec;
      spec.chapters = 3;
      spec.headings_per_chapter = 3;
      spec.subheadings_per_heading = 4;
      spec.rows_per_class = 1;
      spec.seed = std::stoull(p.substr(10));
      return parse_schedule(hscode::testing::make_corpus(spec).schedule_text);
    }
    return parse_schedule(data(p));
  }
};

TEST_P(ScheduleProperties, JsonRoundTrip) {
  const auto s = load();
  const auto json = schedule_to_json(s);
  const auto back = schedule_from_json(nlohmann::json::parse(json.dump()));
  EXPECT_EQ(back, s);
  EXPECT_EQ(schedule_to_json(back), json);
  EXPECT_EQ(back.codes(), s.codes());
}

TEST_P(ScheduleProperties, PrefixClosure) {
  const auto s = load();
  for (const auto &code : s.codes()) {
    std::set<std::string> ancestors;
    for (const auto *a : s.coded_ancestors(code)) ancestors.insert(a->code->digits());
    for (std::size_t len = 2; len < code.digits().size(); len += 2) {
      const auto prefix = code.digits().substr(0, len);
      if (s.find(HsCode::parse(prefix))) {
        EXPECT_TRUE(ancestors.count(prefix)) << prefix << " is not above " << code.digits();
      }
    }
  }
}

TEST_P(ScheduleProperties, CodesUnderShareParentPrefixAndLength) {
  const auto s = load();
  for (const auto &code : s.codes()) {
    for (auto level : {Level::Heading, Level::Subheading, Level::Full}) {
      if (static_cast<int>(level) <= static_cast<int>(code.level())) continue;
      for (const auto &cd : codes_under(s, code, level)) {
        EXPECT_EQ(cd.code.digits().size(), static_cast<std::size_t>(level));
        EXPECT_EQ(cd.code.digits().rfind(code.digits(), 0), 0u);
        EXPECT_FALSE(trim(cd.description).empty());
      }
    }
  }
}

TEST_P(ScheduleProperties, EveryChildExtendsItsParent) {
  const auto s = load();
  std::function<void(const TariffNode &, const std::optional<HsCode> &)> walk =
      [&](const TariffNode &n, const std::optional<HsCode> &parent) {
        EXPECT_FALSE(trim(n.description).empty());
        if (n.code && parent) EXPECT_TRUE(parent->is_ancestor_of(*n.code));
        for (const auto &c : n.children) walk(c, n.code ? n.code : parent);
      };
  for (const auto &r : s.roots()) walk(r, std::nullopt);
}

INSTANTIATE_TEST_SUITE_P(Fixtures, ScheduleProperties,
                         ::testing::Values("heading_8414.tsv", "bearings_8482.tsv",
                                           "fixture_schedule.tsv", "synthetic:1", "synthetic:2",
                                           "synthetic:3"));

TEST(LoadScheduleFile, DetectsJsonAndText) {
  const auto dir = std::filesystem::temp_directory_path() / "hscode_nomenclature_test";
  std::filesystem::create_directories(dir);
  const auto s = parse_schedule(data("heading_8414.tsv"));
  write_file((dir / "s.json").string(), schedule_to_json(s).dump(2));
  write_file((dir / "s.tsv").string(), data("heading_8414.tsv"));
  EXPECT_EQ(load_schedule_file((dir / "s.json").string()), s);
  EXPECT_EQ(load_schedule_file((dir / "s.tsv").string()), s);
  std::filesystem::remove_all(dir);
}

TEST(LoadScheduleFile, JsonWithBrokenPrefixIsRejected) {
  const nlohmann::json bad = {
      {"roots",
       {{{"code", "8414"},
         {"description", "Pumps"},
         {"children", {{{"code", "8415.10"}, {"description", "Wrong"}, {"children", nlohmann::json::array()}}}}}}}};
  EXPECT_THROW(schedule_from_json(bad), Error);
}
