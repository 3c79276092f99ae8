#pragma once

// Case tuples (gene, disease, documents, gold evidence, gold class): JSONL
// loading, panel-level splits, and the ground-truth call sets and evidence
// profiles derived from them.

#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <tuple>
#include <vector>

#include <nlohmann/json.hpp>

#include "gdvrl/evidence.hpp"
#include "gdvrl/tool_call.hpp"

namespace gdvrl {

/// Schema violation in a case or split file. Carries the 1-based line and a
/// JSON-pointer-like field path.
class SchemaError : public std::runtime_error {
 public:
  SchemaError(std::size_t line, std::string field, const std::string& what)
      : std::runtime_error("line " + std::to_string(line) + ", " + field + ": " + what),
        line_(line),
        field_(std::move(field)) {}

  std::size_t line() const noexcept { return line_; }
  const std::string& field() const noexcept { return field_; }

 private:
  std::size_t line_;
  std::string field_;
};

class UnknownValidityClass : public SchemaError {
 public:
  using SchemaError::SchemaError;
};

class UnknownSubtype : public SchemaError {
 public:
  using SchemaError::SchemaError;
};

class UnassignedPanel : public std::runtime_error {
 public:
  explicit UnassignedPanel(std::string panel)
      : std::runtime_error("panel not assigned to any split: " + panel), panel_(std::move(panel)) {}
  const std::string& panel() const noexcept { return panel_; }

 private:
  std::string panel_;
};

struct GoldFinding {
  EvidenceSubtype subtype;
  std::string summary;

  friend bool operator==(const GoldFinding&, const GoldFinding&) = default;
};

struct ArticleRecord {
  std::string pmid;
  std::string pmcid;
  std::string abstract_text;
  std::optional<std::string> full_text;
  std::vector<GoldFinding> gold_findings;

  friend bool operator==(const ArticleRecord&, const ArticleRecord&) = default;
};

struct CaseKey {
  std::string gene;
  std::string disease;
  std::string panel;

  friend bool operator==(const CaseKey&, const CaseKey&) = default;
  friend auto operator<=>(const CaseKey&, const CaseKey&) = default;
};

inline std::string to_string(const CaseKey& k) { return k.gene + " / " + k.disease + " / " + k.panel; }

struct CaseRecord {
  std::string gene;
  std::string disease;
  std::string panel;
  std::vector<ArticleRecord> articles;
  ValidityClass gold_class{ValidityClass::NoKnownDiseaseRelationship};

  CaseKey key() const { return {gene, disease, panel}; }

  const ArticleRecord* find_article(std::string_view pmid, std::string_view pmcid) const {
    for (const auto& a : articles) {
      if (a.pmid == pmid && a.pmcid == pmcid) return &a;
    }
    return nullptr;
  }

  friend bool operator==(const CaseRecord&, const CaseRecord&) = default;
};

enum class Split { Train, Dev, Test };

struct SplitAssignment {
  std::map<std::string, Split> panel_to_split;
};

struct SplitCases {
  std::vector<CaseRecord> train;
  std::vector<CaseRecord> dev;
  std::vector<CaseRecord> test;
};

// ---------------------------------------------------------------------------
// JSON encoding
// ---------------------------------------------------------------------------

inline json to_json(const CaseRecord& c) {
  json articles = json::array();
  for (const auto& a : c.articles) {
    json evidence = json::array();
    for (const auto& g : a.gold_findings) {
      evidence.push_back({{"category", category_name(g.subtype.category())},
                          {"subtype", std::string(g.subtype.label())},
                          {"summary", g.summary}});
    }
    json art = json::object();
    art["pmid"] = a.pmid;
    art["pmcid"] = a.pmcid;
    art["abstract"] = a.abstract_text;
    art["full_text"] = a.full_text ? json(*a.full_text) : json(nullptr);
    art["evidence"] = std::move(evidence);
    articles.push_back(std::move(art));
  }
  json j = json::object();
  j["gene"] = c.gene;
  j["disease"] = c.disease;
  j["panel"] = c.panel;
  j["validity"] = display_name(c.gold_class);
  j["articles"] = std::move(articles);
  return j;
}

namespace detail {

inline const std::string& required_string(const json& j, const char* key, std::size_t line,
                                          const std::string& path) {
  const auto it = j.find(key);
  if (it == j.end()) throw SchemaError(line, path + "/" + key, "missing field");
  if (!it->is_string()) throw SchemaError(line, path + "/" + key, "expected a string");
  const auto& s = it->get_ref<const std::string&>();
  if (s.empty()) throw SchemaError(line, path + "/" + key, "must not be empty");
  return s;
}

}  // namespace detail

/// Validates and decodes one case object. `line` only feeds diagnostics.
inline CaseRecord case_from_json(const json& j, std::size_t line = 0) {
  if (!j.is_object()) throw SchemaError(line, "", "expected a JSON object");
  CaseRecord c;
  c.gene = detail::required_string(j, "gene", line, "");
  c.disease = detail::required_string(j, "disease", line, "");
  c.panel = detail::required_string(j, "panel", line, "");
  const auto& validity = detail::required_string(j, "validity", line, "");
  const auto cls = validity_from_label(validity);
  if (!cls) throw UnknownValidityClass(line, "/validity", "unknown validity class '" + validity + "'");
  c.gold_class = *cls;

  const auto arts = j.find("articles");
  if (arts == j.end() || !arts->is_array()) throw SchemaError(line, "/articles", "expected an array");
  if (arts->empty()) throw SchemaError(line, "/articles", "a case needs at least one article");

  std::set<std::pair<std::string, std::string>> seen;
  for (std::size_t i = 0; i < arts->size(); ++i) {
    const auto& a = (*arts)[i];
    const auto path = "/articles/" + std::to_string(i);
    if (!a.is_object()) throw SchemaError(line, path, "expected an object");
    ArticleRecord rec;
    rec.pmid = detail::required_string(a, "pmid", line, path);
    rec.pmcid = detail::required_string(a, "pmcid", line, path);
    if (!seen.emplace(rec.pmid, rec.pmcid).second) {
      throw SchemaError(line, path, "duplicate (pmid, pmcid) within case");
    }
    if (const auto ab = a.find("abstract"); ab != a.end()) {
      if (!ab->is_string()) throw SchemaError(line, path + "/abstract", "expected a string");
      rec.abstract_text = ab->get<std::string>();
    }
    if (const auto ft = a.find("full_text"); ft != a.end() && !ft->is_null()) {
      if (!ft->is_string()) throw SchemaError(line, path + "/full_text", "expected a string or null");
      rec.full_text = ft->get<std::string>();
    }
    if (const auto ev = a.find("evidence"); ev != a.end()) {
      if (!ev->is_array()) throw SchemaError(line, path + "/evidence", "expected an array");
      for (std::size_t k = 0; k < ev->size(); ++k) {
        const auto& e = (*ev)[k];
        const auto epath = path + "/evidence/" + std::to_string(k);
        if (!e.is_object()) throw SchemaError(line, epath, "expected an object");
        const auto& cat_name = detail::required_string(e, "category", line, epath);
        const auto cat = category_from_name(cat_name);
        if (!cat) throw UnknownSubtype(line, epath + "/category", "unknown category '" + cat_name + "'");
        const auto& sub_name = detail::required_string(e, "subtype", line, epath);
        const auto sub = parse_subtype(*cat, sub_name);
        if (!sub) {
          throw UnknownSubtype(line, epath + "/subtype",
                                    "'" + sub_name + "' is not a " + std::string(category_name(*cat)) + " subtype");
        }
        std::string summary;
        if (const auto s = e.find("summary"); s != e.end() && s->is_string()) summary = s->get<std::string>();
        rec.gold_findings.push_back({*sub, std::move(summary)});
      }
    }
    c.articles.push_back(std::move(rec));
  }
  return c;
}

/// Reads a case JSONL stream. Blank lines are skipped; duplicate
/// (gene, disease, panel) keys are rejected.
inline std::vector<CaseRecord> load_cases(std::istream& in) {
  std::vector<CaseRecord> cases;
  std::set<CaseKey> keys;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (detail::trim(line).empty()) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::parse_error& e) {
      throw SchemaError(lineno, "", std::string("invalid JSON: ") + e.what());
    }
    auto c = case_from_json(j, lineno);
    if (!keys.insert(c.key()).second) {
      throw SchemaError(lineno, "", "duplicate case " + to_string(c.key()));
    }
    cases.push_back(std::move(c));
  }
  return cases;
}

inline std::vector<CaseRecord> load_cases(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open corpus file: " + path);
  return load_cases(in);
}

inline void write_cases(std::ostream& out, const std::vector<CaseRecord>& cases) {
  for (const auto& c : cases) out << to_json(c).dump() << '\n';
}

// ---------------------------------------------------------------------------
// Splits
// ---------------------------------------------------------------------------

inline json to_json(const SplitAssignment& s) {
  json j = {{"train", json::array()}, {"dev", json::array()}, {"test", json::array()}};
  for (const auto& [panel, split] : s.panel_to_split) {
    const char* name = split == Split::Train ? "train" : split == Split::Dev ? "dev" : "test";
    j[name].push_back(panel);
  }
  return j;
}

inline SplitAssignment split_assignment_from_json(const json& j) {
  if (!j.is_object()) throw SchemaError(1, "", "split file must be a JSON object");
  SplitAssignment out;
  const std::array<std::pair<const char*, Split>, 3> names = {
      {{"train", Split::Train}, {"dev", Split::Dev}, {"test", Split::Test}}};
  for (const auto& [name, split] : names) {
    const auto it = j.find(name);
    if (it == j.end()) continue;
    if (!it->is_array()) throw SchemaError(1, std::string("/") + name, "expected an array of panel names");
    for (const auto& p : *it) {
      if (!p.is_string()) throw SchemaError(1, std::string("/") + name, "panel names must be strings");
      const auto panel = p.get<std::string>();
      if (!out.panel_to_split.emplace(panel, split).second) {
        throw SchemaError(1, std::string("/") + name, "panel '" + panel + "' assigned to more than one split");
      }
    }
  }
  return out;
}

inline SplitAssignment load_split_assignment(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open split file: " + path);
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw SchemaError(1, "", std::string("invalid JSON: ") + e.what());
  }
  return split_assignment_from_json(j);
}

inline SplitCases split_by_panel(const std::vector<CaseRecord>& cases, const SplitAssignment& assignment) {
  SplitCases out;
  for (const auto& c : cases) {
    const auto it = assignment.panel_to_split.find(c.panel);
    if (it == assignment.panel_to_split.end()) throw UnassignedPanel(c.panel);
    switch (it->second) {
      case Split::Train: out.train.push_back(c); break;
      case Split::Dev: out.dev.push_back(c); break;
      case Split::Test: out.test.push_back(c); break;
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Ground truth
// ---------------------------------------------------------------------------

/// One call per (category, article) pair with at least one gold finding.
inline ToolCallSet ground_truth_calls(const CaseRecord& c) {
  ToolCallSet calls;
  for (const auto& a : c.articles) {
    for (const auto& g : a.gold_findings) {
      calls.insert(ToolCall{g.subtype.category(), a.pmid, a.pmcid, c.gene, c.disease});
    }
  }
  return calls;
}

inline EvidenceProfile ground_truth_profile(const CaseRecord& c) {
  EvidenceProfile profile;
  for (const auto& a : c.articles) {
    for (const auto& g : a.gold_findings) profile.insert({a.pmid, g.subtype});
  }
  return profile;
}

/// Number of distinct categories with any gold evidence in the case.
inline int gold_category_count(const CaseRecord& c) {
  std::set<EvidenceCategory> cats;
  for (const auto& a : c.articles) {
    for (const auto& g : a.gold_findings) cats.insert(g.subtype.category());
  }
  return static_cast<int>(cats.size());
}

}  // namespace gdvrl
