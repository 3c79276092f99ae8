#pragma once

// Exact-set evaluation metrics averaged over episodes, and the per-agent
// TP/TN/FP/FN breakdown over invoked (category, article) pairs.

#include <algorithm>
#include <array>
#include <map>
#include <numeric>
#include <optional>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "gdvrl/case_store.hpp"
#include "gdvrl/errors.hpp"
#include "gdvrl/orchestration.hpp"
#include "gdvrl/reward.hpp"

namespace gdvrl {

struct AccuracyF1 {
  double accuracy = 0.0;
  double mean_f1 = 0.0;
};

struct AgentCounts {
  long tp = 0;
  long tn = 0;
  long fp = 0;
  long fn = 0;

  long total() const noexcept { return tp + tn + fp + fn; }
  friend bool operator==(const AgentCounts&, const AgentCounts&) = default;
};

using PerAgentCounts = std::map<EvidenceCategory, AgentCounts>;

struct MetricsReport {
  double outcome_acc = 0.0;
  std::optional<double> agent_call_acc;  ///< absent when no supervisor episodes were evaluated
  std::optional<double> agent_call_f1;
  double evidence_acc = 0.0;
  double evidence_f1 = 0.0;
  std::size_t n = 0;
  PerAgentCounts per_agent_counts;
};

namespace detail {

/// Order-independent mean: values are summed in sorted order.
inline double stable_mean(std::vector<double> values) {
  std::sort(values.begin(), values.end());
  return std::accumulate(values.begin(), values.end(), 0.0) / static_cast<double>(values.size());
}

template <class Set>
AccuracyF1 exact_set_metrics(const std::vector<std::pair<Set, Set>>& episodes) {
  if (episodes.empty()) throw EmptyInput();
  std::vector<double> hits;
  std::vector<double> f1s;
  hits.reserve(episodes.size());
  f1s.reserve(episodes.size());
  for (const auto& [pred, gold] : episodes) {
    hits.push_back(pred == gold ? 1.0 : 0.0);
    f1s.push_back(set_f1(pred, gold));
  }
  return {stable_mean(std::move(hits)), stable_mean(std::move(f1s))};
}

}  // namespace detail

inline double outcome_accuracy(const std::vector<std::pair<Prediction, ValidityClass>>& pairs) {
  if (pairs.empty()) throw EmptyInput();
  std::size_t hits = 0;
  for (const auto& [pred, gold] : pairs) hits += (pred && *pred == gold) ? 1 : 0;
  return static_cast<double>(hits) / static_cast<double>(pairs.size());
}

inline AccuracyF1 agent_call_metrics(const std::vector<std::pair<ToolCallSet, ToolCallSet>>& episodes) {
  return detail::exact_set_metrics(episodes);
}

inline AccuracyF1 evidence_metrics(const std::vector<std::pair<EvidenceProfile, EvidenceProfile>>& episodes) {
  return detail::exact_set_metrics(episodes);
}

struct AgentEpisode {
  std::vector<ToolCall> calls;
  std::vector<EvidenceFinding> findings;  ///< index-aligned with calls
  EvidenceProfile gold;
};

inline PerAgentCounts empty_per_agent_counts() {
  PerAgentCounts out;
  for (auto c : kAllCategories) out[c] = {};
  return out;
}

/// Counts each distinct invoked (category, pmid) once per episode.
inline PerAgentCounts per_agent_breakdown(const std::vector<AgentEpisode>& episodes) {
  auto out = empty_per_agent_counts();
  for (const auto& ep : episodes) {
    if (ep.findings.size() != ep.calls.size()) throw std::invalid_argument("findings must align with calls");
    std::map<std::pair<EvidenceCategory, std::string>, std::set<EvidenceSubtype>> invoked;
    for (std::size_t i = 0; i < ep.calls.size(); ++i) {
      invoked.emplace(std::make_pair(ep.calls[i].category, ep.calls[i].pmid), ep.findings[i].subtypes);
    }
    for (const auto& [key, predicted] : invoked) {
      std::set<EvidenceSubtype> gold;
      for (const auto& item : ep.gold) {
        if (item.pmid == key.second && item.subtype.category() == key.first) gold.insert(item.subtype);
      }
      auto& counts = out[key.first];
      if (gold.empty()) {
        (predicted.empty() ? counts.tn : counts.fp) += 1;
      } else {
        (predicted == gold ? counts.tp : counts.fn) += 1;
      }
    }
  }
  return out;
}

/// Full metric suite over a trajectory log. Single-agent episodes contribute
/// only to outcome and evidence metrics.
inline MetricsReport evaluate_run(const std::vector<Trajectory>& log, const std::vector<CaseRecord>& cases) {
  if (log.empty()) throw EmptyInput();
  std::map<CaseKey, const CaseRecord*> by_key;
  for (const auto& c : cases) by_key.emplace(c.key(), &c);

  std::vector<std::string> unresolved;
  for (const auto& t : log) {
    if (by_key.find(case_key_of(t)) == by_key.end()) unresolved.push_back(to_string(case_key_of(t)));
  }
  if (!unresolved.empty()) throw CaseMismatch(std::move(unresolved));

  std::vector<std::pair<Prediction, ValidityClass>> outcomes;
  std::vector<std::pair<ToolCallSet, ToolCallSet>> call_sets;
  std::vector<std::pair<EvidenceProfile, EvidenceProfile>> profiles;
  std::vector<AgentEpisode> agent_episodes;

  for (const auto& t : log) {
    const auto& c = *by_key.at(case_key_of(t));
    if (const auto* sup = std::get_if<SupervisorTrajectory>(&t)) {
      outcomes.emplace_back(sup->predicted_class, c.gold_class);
      call_sets.emplace_back(sup->call_set(), ground_truth_calls(c));
      auto gold = ground_truth_profile(c);
      profiles.emplace_back(sup->predicted_profile(), gold);
      agent_episodes.push_back({sup->calls, sup->observations, std::move(gold)});
    } else {
      const auto& single = std::get<SingleAgentTrajectory>(t);
      outcomes.emplace_back(single.predicted_class, c.gold_class);
      profiles.emplace_back(single.fine_evidence, ground_truth_profile(c));
    }
  }

  MetricsReport r;
  r.n = log.size();
  r.outcome_acc = outcome_accuracy(outcomes);
  const auto ev = evidence_metrics(profiles);
  r.evidence_acc = ev.accuracy;
  r.evidence_f1 = ev.mean_f1;
  if (!call_sets.empty()) {
    const auto ac = agent_call_metrics(call_sets);
    r.agent_call_acc = ac.accuracy;
    r.agent_call_f1 = ac.mean_f1;
  }
  r.per_agent_counts = per_agent_breakdown(agent_episodes);
  return r;
}

inline json to_json(const MetricsReport& r) {
  json counts = json::object();
  for (const auto& [cat, c] : r.per_agent_counts) {
    counts[std::string(category_name(cat))] = {{"tp", c.tp}, {"tn", c.tn}, {"fp", c.fp}, {"fn", c.fn}};
  }
  json j = json::object();
  j["outcome_acc"] = r.outcome_acc;
  j["agent_call_acc"] = r.agent_call_acc ? json(*r.agent_call_acc) : json(nullptr);
  j["agent_call_f1"] = r.agent_call_f1 ? json(*r.agent_call_f1) : json(nullptr);
  j["evidence_acc"] = r.evidence_acc;
  j["evidence_f1"] = r.evidence_f1;
  j["n"] = r.n;
  j["per_agent_counts"] = std::move(counts);
  return j;
}

}  // namespace gdvrl
