#pragma once

// Canonical enumerations for the experimental-evidence schema: validity
// classes, evidence categories, the 16-entry subtype catalog and the
// sub-agent tool names built from them.

#include <algorithm>
#include <array>
#include <cctype>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>

namespace gdvrl {

class ParseFailure : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class UnknownTool : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// ---------------------------------------------------------------------------
// Validity classes
// ---------------------------------------------------------------------------

/// Ordinal validity scale. The underlying value is the rank.
enum class ValidityClass : int {
  NoKnownDiseaseRelationship = 0,
  Limited = 1,
  Moderate = 2,
  Strong = 3,
  Definitive = 4,
};

inline constexpr int kNumValidityClasses = 5;
inline constexpr int kMaxRank = kNumValidityClasses - 1;

inline constexpr std::array<ValidityClass, kNumValidityClasses> kAllValidityClasses = {
    ValidityClass::NoKnownDiseaseRelationship, ValidityClass::Limited,
    ValidityClass::Moderate, ValidityClass::Strong, ValidityClass::Definitive};

/// A classification outcome; nullopt stands for a parse failure.
using Prediction = std::optional<ValidityClass>;

constexpr int rank(ValidityClass c) noexcept { return static_cast<int>(c); }

constexpr ValidityClass validity_from_rank(int r) {
  if (r < 0 || r > kMaxRank) throw std::out_of_range("validity rank out of range");
  return static_cast<ValidityClass>(r);
}

/// Human-facing label, as used in prompts and the corpus files.
constexpr std::string_view display_name(ValidityClass c) noexcept {
  switch (c) {
    case ValidityClass::NoKnownDiseaseRelationship: return "No Known Disease Relationship";
    case ValidityClass::Limited: return "Limited";
    case ValidityClass::Moderate: return "Moderate";
    case ValidityClass::Strong: return "Strong";
    case ValidityClass::Definitive: return "Definitive";
  }
  return "";
}

/// Enumerator spelling (no spaces).
constexpr std::string_view identifier(ValidityClass c) noexcept {
  switch (c) {
    case ValidityClass::NoKnownDiseaseRelationship: return "NoKnownDiseaseRelationship";
    default: return display_name(c);
  }
}

namespace detail {

inline std::string_view trim(std::string_view s) {
  const auto is_space = [](unsigned char ch) { return std::isspace(ch) != 0; };
  while (!s.empty() && is_space(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && is_space(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return s;
}

/// Lower-cases, trims and collapses internal whitespace runs to one space.
inline std::string normalize(std::string_view s) {
  std::string out;
  out.reserve(s.size());
  bool pending_space = false;
  for (unsigned char ch : trim(s)) {
    if (std::isspace(ch)) {
      pending_space = true;
      continue;
    }
    if (pending_space) out.push_back(' ');
    pending_space = false;
    out.push_back(static_cast<char>(std::tolower(ch)));
  }
  return out;
}

inline bool consume_prefix(std::string& s, std::string_view prefix) {
  if (s.size() < prefix.size() || s.compare(0, prefix.size(), prefix) != 0) return false;
  s.erase(0, prefix.size());
  return true;
}

}  // namespace detail

/// Exact (case-sensitive, whitespace-trimmed) label lookup. Accepts either
/// the display spelling or the enumerator spelling. Disputed and Refuted are
/// deliberately not members.
inline std::optional<ValidityClass> validity_from_label(std::string_view text) {
  const auto t = detail::trim(text);
  for (auto c : kAllValidityClasses) {
    if (t == display_name(c) || t == identifier(c)) return c;
  }
  return std::nullopt;
}

/// Extracts the label that follows the last "CLASSIFICATION:" prefix, or
/// treats the whole text as a bare label when the prefix is absent.
/// Non-throwing variant.
inline Prediction try_parse_validity_label(std::string_view text) {
  constexpr std::string_view kPrefix = "CLASSIFICATION:";
  const auto pos = text.rfind(kPrefix);
  if (pos == std::string_view::npos) return validity_from_label(text);
  auto rest = text.substr(pos + kPrefix.size());
  const auto eol = rest.find_first_of("\r\n");
  if (eol != std::string_view::npos) rest = rest.substr(0, eol);
  return validity_from_label(rest);
}

inline ValidityClass parse_validity_label(std::string_view text) {
  if (auto c = try_parse_validity_label(text)) return *c;
  throw ParseFailure("no recognizable validity classification");
}

// ---------------------------------------------------------------------------
// Evidence categories and subtypes
// ---------------------------------------------------------------------------

enum class EvidenceCategory : int {
  BiochemicalFunction = 0,
  ProteinInteraction = 1,
  Expression = 2,
  FunctionalAlteration = 3,
  ModelSystem = 4,
  Rescue = 5,
};

inline constexpr int kNumCategories = 6;

inline constexpr std::array<EvidenceCategory, kNumCategories> kAllCategories = {
    EvidenceCategory::BiochemicalFunction, EvidenceCategory::ProteinInteraction,
    EvidenceCategory::Expression,          EvidenceCategory::FunctionalAlteration,
    EvidenceCategory::ModelSystem,         EvidenceCategory::Rescue};

constexpr int index_of(EvidenceCategory c) noexcept { return static_cast<int>(c); }

/// CategoryName as used in tool names and observation JSON.
constexpr std::string_view category_name(EvidenceCategory c) noexcept {
  constexpr std::array<std::string_view, kNumCategories> names = {
      "BiochemicalFunction", "ProteinInteraction", "Expression",
      "FunctionalAlteration", "ModelSystem",       "Rescue"};
  return names[static_cast<std::size_t>(index_of(c))];
}

/// Prefix used by the qualified subtype spelling ("Model Systems Cell culture model").
constexpr std::string_view category_display(EvidenceCategory c) noexcept {
  constexpr std::array<std::string_view, kNumCategories> names = {
      "Biochemical Function", "Protein interactions", "Expression",
      "Functional Alteration", "Model Systems",       "Rescue"};
  return names[static_cast<std::size_t>(index_of(c))];
}

namespace detail {

struct CategoryAliases {
  EvidenceCategory category;
  // normalized spellings, longest first so prefix stripping is greedy
  std::array<std::string_view, 6> spellings;
};

inline constexpr std::array<CategoryAliases, kNumCategories> kCategoryAliases = {{
    {EvidenceCategory::BiochemicalFunction,
     {"biochemical function", "biochemicalfunction", "", "", "", ""}},
    {EvidenceCategory::ProteinInteraction,
     {"protein interactions", "protein interaction", "proteininteraction", "", "", ""}},
    {EvidenceCategory::Expression, {"gene expression", "expression", "", "", "", ""}},
    {EvidenceCategory::FunctionalAlteration,
     {"functional alteration", "functionalalteration", "", "", "", ""}},
    {EvidenceCategory::ModelSystem,
     {"model systems", "model system", "modelsystems", "modelsystem", "", ""}},
    {EvidenceCategory::Rescue, {"rescue experiments", "rescue", "", "", "", ""}},
}};

}  // namespace detail

/// Accepts the CategoryName, the display prefix or any attested variant.
inline std::optional<EvidenceCategory> category_from_name(std::string_view text) {
  const auto n = detail::normalize(text);
  for (const auto& entry : detail::kCategoryAliases) {
    for (auto spelling : entry.spellings) {
      if (!spelling.empty() && n == spelling) return entry.category;
    }
  }
  return std::nullopt;
}

inline std::string canonical_tool_name(EvidenceCategory c) {
  return "ExperimentalEvidence_" + std::string(category_name(c)) + "_agent";
}

inline std::optional<EvidenceCategory> try_category_from_tool_name(std::string_view name) {
  for (auto c : kAllCategories) {
    if (name == canonical_tool_name(c)) return c;
  }
  return std::nullopt;
}

inline EvidenceCategory category_from_tool_name(std::string_view name) {
  if (auto c = try_category_from_tool_name(name)) return *c;
  throw UnknownTool("unknown tool name: " + std::string(name));
}

/// One entry of the subtype catalog. Identity is (category, slot).
class EvidenceSubtype {
 public:
  constexpr EvidenceSubtype(EvidenceCategory category, int slot) : category_(category), slot_(slot) {}

  constexpr EvidenceCategory category() const noexcept { return category_; }
  constexpr int slot() const noexcept { return slot_; }
  std::string_view label() const noexcept;
  /// Catalog-wide spelling, e.g. "Rescue Non-human model organism".
  std::string qualified() const;

  friend constexpr bool operator==(const EvidenceSubtype&, const EvidenceSubtype&) = default;
  friend constexpr auto operator<=>(const EvidenceSubtype&, const EvidenceSubtype&) = default;

 private:
  EvidenceCategory category_;
  int slot_;
};

namespace detail {

struct SubtypeEntry {
  EvidenceCategory category;
  std::string_view label;
  // additional normalized surface forms seen in prompts and traces
  std::array<std::string_view, 3> aliases;
};

inline constexpr std::array<SubtypeEntry, 16> kSubtypeCatalog = {{
    {EvidenceCategory::BiochemicalFunction, "A", {"(a)", "", ""}},
    {EvidenceCategory::BiochemicalFunction, "B", {"(b)", "", ""}},
    {EvidenceCategory::ProteinInteraction, "physical association", {"", "", ""}},
    {EvidenceCategory::ProteinInteraction, "genetic interaction (sensu unexpected)", {"", "", ""}},
    {EvidenceCategory::ProteinInteraction, "negative genetic interaction", {"", "", ""}},
    {EvidenceCategory::ProteinInteraction, "positive genetic interaction", {"", "", ""}},
    {EvidenceCategory::Expression, "A", {"(a)", "", ""}},
    {EvidenceCategory::Expression, "B", {"(b)", "", ""}},
    {EvidenceCategory::FunctionalAlteration, "Patient cells", {"", "", ""}},
    {EvidenceCategory::FunctionalAlteration, "Non-patient cells", {"", "", ""}},
    {EvidenceCategory::ModelSystem, "Non-human model organism", {"a non-human model organism", "", ""}},
    {EvidenceCategory::ModelSystem, "Cell culture model", {"a cell culture model", "", ""}},
    {EvidenceCategory::Rescue, "Human", {"", "", ""}},
    {EvidenceCategory::Rescue, "Patient cells", {"", "", ""}},
    {EvidenceCategory::Rescue, "Non-human model organism", {"", "", ""}},
    {EvidenceCategory::Rescue, "Cell culture model", {"cell culture", "", ""}},
}};

inline constexpr std::array<int, kNumCategories> kCatalogOffset = {0, 2, 6, 8, 10, 12};
inline constexpr std::array<int, kNumCategories> kCatalogCount = {2, 4, 2, 2, 2, 4};

inline const SubtypeEntry& entry_for(EvidenceCategory c, int slot) {
  const auto ci = static_cast<std::size_t>(index_of(c));
  if (slot < 0 || slot >= kCatalogCount[ci]) throw std::out_of_range("subtype slot out of range");
  return kSubtypeCatalog[static_cast<std::size_t>(kCatalogOffset[ci] + slot)];
}

/// Strips separators that sit between a category prefix and the label.
inline void strip_separator(std::string& s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '-' || s.front() == ':' ||
                        s.front() == '/' || s.front() == '_')) {
    s.erase(0, 1);
  }
}

inline std::optional<int> match_slot(EvidenceCategory c, std::string s) {
  const auto ci = static_cast<std::size_t>(index_of(c));
  // optional category prefix
  for (auto spelling : kCategoryAliases[ci].spellings) {
    if (spelling.empty()) continue;
    std::string probe = s;
    if (consume_prefix(probe, spelling) && (probe.empty() || !std::isalnum(static_cast<unsigned char>(probe.front())))) {
      strip_separator(probe);
      s = probe;
      break;
    }
  }
  if (c == EvidenceCategory::Rescue) consume_prefix(s, "in ");
  for (int slot = 0; slot < kCatalogCount[ci]; ++slot) {
    const auto& e = kSubtypeCatalog[static_cast<std::size_t>(kCatalogOffset[ci] + slot)];
    if (s == normalize(e.label)) return slot;
    for (auto alias : e.aliases) {
      if (!alias.empty() && s == alias) return slot;
    }
  }
  return std::nullopt;
}

}  // namespace detail

inline std::string_view EvidenceSubtype::label() const noexcept {
  return detail::entry_for(category_, slot_).label;
}

inline std::string EvidenceSubtype::qualified() const {
  return std::string(category_display(category_)) + " " + std::string(label());
}

inline int subtype_count(EvidenceCategory c) noexcept {
  return detail::kCatalogCount[static_cast<std::size_t>(index_of(c))];
}

/// Every catalog member, in catalog order.
inline std::array<EvidenceSubtype, 16> subtype_catalog() {
  std::array<EvidenceSubtype, 16> out = {
      EvidenceSubtype{EvidenceCategory::BiochemicalFunction, 0}, {EvidenceCategory::BiochemicalFunction, 1},
      {EvidenceCategory::ProteinInteraction, 0}, {EvidenceCategory::ProteinInteraction, 1},
      {EvidenceCategory::ProteinInteraction, 2}, {EvidenceCategory::ProteinInteraction, 3},
      {EvidenceCategory::Expression, 0}, {EvidenceCategory::Expression, 1},
      {EvidenceCategory::FunctionalAlteration, 0}, {EvidenceCategory::FunctionalAlteration, 1},
      {EvidenceCategory::ModelSystem, 0}, {EvidenceCategory::ModelSystem, 1},
      {EvidenceCategory::Rescue, 0}, {EvidenceCategory::Rescue, 1},
      {EvidenceCategory::Rescue, 2}, {EvidenceCategory::Rescue, 3}};
  return out;
}

/// Resolves a subtype label within a known category. Matching is
/// case-insensitive after whitespace normalization, and tolerates a leading
/// category prefix ("Rescue Human", "rescue in human", "Model Systems --
/// non-human model organism").
inline std::optional<EvidenceSubtype> parse_subtype(EvidenceCategory c, std::string_view label) {
  if (auto slot = detail::match_slot(c, detail::normalize(label))) return EvidenceSubtype{c, *slot};
  return std::nullopt;
}

/// Resolves a category-qualified spelling such as "Functional Alteration
/// Patient cells" where the category must be derived from the text itself.
inline std::optional<EvidenceSubtype> parse_qualified_subtype(std::string_view text) {
  const auto n = detail::normalize(text);
  for (const auto& entry : detail::kCategoryAliases) {
    for (auto spelling : entry.spellings) {
      if (spelling.empty()) continue;
      std::string rest = n;
      if (!detail::consume_prefix(rest, spelling)) continue;
      if (!rest.empty() && std::isalnum(static_cast<unsigned char>(rest.front()))) continue;
      detail::strip_separator(rest);
      if (auto slot = detail::match_slot(entry.category, rest)) return EvidenceSubtype{entry.category, *slot};
    }
  }
  return std::nullopt;
}

inline bool validate_subtype(EvidenceCategory c, std::string_view label) {
  return parse_subtype(c, label).has_value();
}

}  // namespace gdvrl
