#pragma once

#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "gdvrl/case_store.hpp"
#include "gdvrl/orchestration.hpp"

namespace gdvrl::testing {

inline std::string fixture_path(const std::string& name) { return std::string(GDVRL_FIXTURES) + "/" + name; }

inline std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

inline std::vector<CaseRecord> curated_cases() { return load_cases(fixture_path("curated_cases.jsonl")); }

/// POLR1D single, POLR1D multi, OCRL single, OCRL multi.
inline std::vector<Trajectory> curated_trajectories() {
  std::ifstream in(fixture_path("curated_trajectories.jsonl"));
  return load_trajectories(in);
}

inline const CaseRecord& case_for(const std::vector<CaseRecord>& cases, const std::string& gene) {
  for (const auto& c : cases) {
    if (c.gene == gene) return c;
  }
  throw std::out_of_range("no fixture case for " + gene);
}

/// A case with one article per entry of `findings`; each entry lists the gold
/// subtypes of that article.
inline CaseRecord make_case(const std::string& gene, const std::vector<std::vector<EvidenceSubtype>>& findings,
                            ValidityClass cls = ValidityClass::Moderate, const std::string& panel = "P1") {
  CaseRecord c;
  c.gene = gene;
  c.disease = gene + " disorder";
  c.panel = panel;
  c.gold_class = cls;
  for (std::size_t i = 0; i < findings.size(); ++i) {
    ArticleRecord a;
    a.pmid = gene + "-" + std::to_string(1000 + i);
    a.pmcid = "PMC" + std::to_string(5000 + i);
    a.abstract_text = "abstract " + std::to_string(i);
    for (const auto& s : findings[i]) a.gold_findings.push_back({s, "gold " + std::string(s.label())});
    c.articles.push_back(std::move(a));
  }
  return c;
}

inline ToolCall call_for(const CaseRecord& c, EvidenceCategory k, std::size_t article) {
  const auto& a = c.articles.at(article);
  return ToolCall{k, a.pmid, a.pmcid, c.gene, c.disease};
}

}  // namespace gdvrl::testing
