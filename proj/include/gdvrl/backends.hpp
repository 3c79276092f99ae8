#pragma once

// Sub-agent evaluators behind one interface, and the single-agent
// get_full_text tool.

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <utility>

#include "gdvrl/case_store.hpp"
#include "gdvrl/errors.hpp"
#include "gdvrl/random.hpp"
#include "gdvrl/tool_call.hpp"

namespace gdvrl {

class BackendUnavailable : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Evaluates one (category, document) call against a case.
class AgentBackend {
 public:
  virtual ~AgentBackend() = default;
  virtual EvidenceFinding evaluate(const ToolCall& call, const CaseRecord& c) const = 0;
  /// Whether evaluate() may be called from several threads at once.
  virtual bool concurrency_safe() const { return true; }
};

namespace detail {

inline EvidenceFinding empty_finding(const ToolCall& call, std::string why) {
  return EvidenceFinding{call.category, call.pmid, {}, std::move(why)};
}

/// Resolves the call's document, or nullptr when the call does not refer to
/// an article of this case.
inline const ArticleRecord* resolve_document(const ToolCall& call, const CaseRecord& c) {
  if (call.gene != c.gene || call.disease != c.disease) return nullptr;
  return c.find_article(call.pmid, call.pmcid);
}

}  // namespace detail

/// Gold lookup: the finding carries the case's gold subtypes for the call's
/// (category, article) pair together with the gold summaries.
inline EvidenceFinding oracle_evaluate(const ToolCall& call, const CaseRecord& c) {
  const auto* article = detail::resolve_document(call, c);
  if (article == nullptr) {
    return detail::empty_finding(call, "Document PMID " + call.pmid + " / " + call.pmcid +
                                           " is not part of this case; no evidence assessed.");
  }
  EvidenceFinding f{call.category, call.pmid, {}, {}};
  for (const auto& g : article->gold_findings) {
    if (g.subtype.category() != call.category) continue;
    f.subtypes.insert(g.subtype);
    if (!g.summary.empty()) {
      if (!f.explanation.empty()) f.explanation += ' ';
      f.explanation += g.summary;
    }
  }
  if (f.subtypes.empty()) {
    f.explanation = "No " + std::string(category_name(call.category)) + " evidence reported in this article.";
  }
  return f;
}

class OracleBackend final : public AgentBackend {
 public:
  EvidenceFinding evaluate(const ToolCall& call, const CaseRecord& c) const override {
    return oracle_evaluate(call, c);
  }
};

struct NoiseSpec {
  double miss_rate = 0.0;
  double false_alarm_rate = 0.0;
  std::uint64_t seed = 0;

  void validate() const {
    if (!(miss_rate >= 0.0 && miss_rate <= 1.0) || !(false_alarm_rate >= 0.0 && false_alarm_rate <= 1.0)) {
      throw InvalidConfig("noise rates must lie in [0,1]");
    }
  }
};

/// Oracle result perturbed per catalog subtype. One uniform draw per subtype
/// slot of the call's category, from a stream keyed on
/// (seed, gene, disease, pmid, category): gold subtypes survive when the draw
/// is >= miss_rate, absent ones are added when it is < false_alarm_rate.
inline EvidenceFinding noisy_oracle_evaluate(const ToolCall& call, const CaseRecord& c, const NoiseSpec& noise) {
  auto f = oracle_evaluate(call, c);
  if (detail::resolve_document(call, c) == nullptr) return f;
  auto rng = keyed_rng(noise.seed, {call.gene, call.disease, call.pmid, category_name(call.category)});
  std::set<EvidenceSubtype> out;
  for (int slot = 0; slot < subtype_count(call.category); ++slot) {
    const EvidenceSubtype s{call.category, slot};
    const double u = uniform01(rng);
    if (f.subtypes.count(s) != 0) {
      if (u >= noise.miss_rate) out.insert(s);
    } else if (u < noise.false_alarm_rate) {
      out.insert(s);
    }
  }
  if (out != f.subtypes) {
    f.explanation = out.empty() ? "No " + std::string(category_name(call.category)) + " evidence identified."
                                : "Evidence identified (noisy assessment).";
  }
  f.subtypes = std::move(out);
  return f;
}

class NoisyOracleBackend final : public AgentBackend {
 public:
  explicit NoisyOracleBackend(NoiseSpec noise) : noise_(noise) { noise_.validate(); }

  EvidenceFinding evaluate(const ToolCall& call, const CaseRecord& c) const override {
    return noisy_oracle_evaluate(call, c, noise_);
  }

 private:
  NoiseSpec noise_;
};

/// Replays recorded observations keyed by (category, pmid). Calls without a
/// recording get an empty finding.
class ScriptedBackend final : public AgentBackend {
 public:
  void record(EvidenceFinding f) {
    auto key = std::make_pair(f.category, f.pmid);
    recorded_.insert_or_assign(std::move(key), std::move(f));
  }

  EvidenceFinding evaluate(const ToolCall& call, const CaseRecord&) const override {
    const auto it = recorded_.find({call.category, call.pmid});
    if (it == recorded_.end()) return detail::empty_finding(call, "No recorded observation.");
    auto f = it->second;
    f.pmid = call.pmid;
    return f;
  }

 private:
  std::map<std::pair<EvidenceCategory, std::string>, EvidenceFinding> recorded_;
};

/// Full text of the case article with this PMCID; nullopt when the PMCID is
/// unknown or the article has no full text.
inline std::optional<std::string> get_full_text(std::string_view pmcid, const CaseRecord& c) {
  for (const auto& a : c.articles) {
    if (a.pmcid == pmcid) return a.full_text;
  }
  return std::nullopt;
}

}  // namespace gdvrl
