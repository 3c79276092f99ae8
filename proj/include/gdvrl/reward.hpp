#pragma once

// Outcome, process and hybrid rewards over trajectories.
//
//   r_out    = sigma * (1 - alpha * |rank(pred) - rank(gold)|)
//   s        = 2 |C ∩ C*| / (|C| + |C*|)             (1 when both are empty)
//   r_proc   = clip(gamma * s^3 - gamma / 2 - lambda * n_err, clip_low, clip_high)
//   r_hybrid = beta * r_out + (1 - beta) * r_proc
//
// A missing classification is scored at the maximal rank distance.

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <string>
#include <string_view>
#include <variant>

#include <nlohmann/json.hpp>

#include "gdvrl/case_store.hpp"
#include "gdvrl/errors.hpp"
#include "gdvrl/evidence.hpp"
#include "gdvrl/orchestration.hpp"

namespace gdvrl {

enum class RewardScheme { OutcomeOnly, Hybrid };

inline std::string_view scheme_name(RewardScheme s) noexcept {
  return s == RewardScheme::Hybrid ? "hybrid" : "outcome_only";
}

/// Accepts "hybrid", "outcome" and "outcome_only".
inline RewardScheme parse_scheme(std::string_view s) {
  if (s == "hybrid") return RewardScheme::Hybrid;
  if (s == "outcome" || s == "outcome_only") return RewardScheme::OutcomeOnly;
  throw InvalidConfig("unknown reward scheme '" + std::string(s) + "'");
}

struct RewardConfig {
  double alpha = 0.5;
  double sigma = 4.0;
  double gamma = 8.0;
  double lambda = 0.5;
  double beta = 0.5;
  double clip_low = -4.0;
  double clip_high = 4.0;
  /// Count unparseable single-agent answers and dropped evidence entries as
  /// malformed blocks in the process penalty.
  bool penalize_single_agent_output = true;

  void validate() const {
    if (!(alpha > 0.0)) throw InvalidConfig("alpha must be positive");
    if (!(sigma > 0.0)) throw InvalidConfig("sigma must be positive");
    if (!(gamma > 0.0)) throw InvalidConfig("gamma must be positive");
    if (!(lambda >= 0.0)) throw InvalidConfig("lambda must be nonnegative");
    if (!(beta >= 0.0 && beta <= 1.0)) throw InvalidConfig("beta must lie in [0,1]");
    if (!(clip_low < clip_high)) throw InvalidConfig("clip_low must be below clip_high");
  }
};

struct RewardBreakdown {
  double r_out = 0.0;
  double s = 0.0;
  double r_proc = 0.0;
  int n_err = 0;
  double r_hybrid = 0.0;
  RewardScheme scheme = RewardScheme::Hybrid;

  friend bool operator==(const RewardBreakdown&, const RewardBreakdown&) = default;
};

inline double outcome_reward(const Prediction& pred, ValidityClass gold, const RewardConfig& cfg = {}) {
  const int distance = pred ? std::abs(rank(*pred) - rank(gold)) : kMaxRank;
  return cfg.sigma * (1.0 - cfg.alpha * distance);
}

/// Set F1 with exact element matching; 1 when both sets are empty.
template <class Set>
double set_f1(const Set& pred, const Set& gold) {
  if (pred.empty() && gold.empty()) return 1.0;
  if (pred.empty() || gold.empty()) return 0.0;
  std::size_t common = 0;
  auto p = pred.begin();
  auto g = gold.begin();
  const auto less = pred.key_comp();
  while (p != pred.end() && g != gold.end()) {
    if (less(*p, *g)) {
      ++p;
    } else if (less(*g, *p)) {
      ++g;
    } else {
      ++common;
      ++p;
      ++g;
    }
  }
  return 2.0 * static_cast<double>(common) / static_cast<double>(pred.size() + gold.size());
}

inline double call_alignment_f1(const ToolCallSet& pred, const ToolCallSet& gold) { return set_f1(pred, gold); }

inline double single_agent_process_base(const EvidenceProfile& pred, const EvidenceProfile& gold) {
  return set_f1(pred, gold);
}

inline double process_reward(double s, int n_err, const RewardConfig& cfg = {}) {
  const double raw = cfg.gamma * s * s * s - cfg.gamma / 2.0 - cfg.lambda * n_err;
  return std::clamp(raw, cfg.clip_low, cfg.clip_high);
}

inline double hybrid_reward(double r_out, double r_proc, const RewardConfig& cfg = {}) {
  return cfg.beta * r_out + (1.0 - cfg.beta) * r_proc;
}

inline RewardBreakdown compose_breakdown(double r_out, double s, int n_err, RewardScheme scheme,
                                         const RewardConfig& cfg) {
  RewardBreakdown b;
  b.r_out = r_out;
  b.s = s;
  b.n_err = n_err;
  b.r_proc = process_reward(s, n_err, cfg);
  b.scheme = scheme;
  b.r_hybrid = scheme == RewardScheme::Hybrid ? hybrid_reward(b.r_out, b.r_proc, cfg) : b.r_out;
  return b;
}

inline RewardBreakdown grade_trajectory(const SupervisorTrajectory& t, const CaseRecord& c, RewardScheme scheme,
                                        const RewardConfig& cfg = {}) {
  if (t.case_key != c.key()) throw CaseMismatch({to_string(t.case_key)});
  const double s = call_alignment_f1(t.call_set(), ground_truth_calls(c));
  return compose_breakdown(outcome_reward(t.predicted_class, c.gold_class, cfg), s, t.n_err, scheme, cfg);
}

inline RewardBreakdown grade_trajectory(const SingleAgentTrajectory& t, const CaseRecord& c, RewardScheme scheme,
                                        const RewardConfig& cfg = {}) {
  if (t.case_key != c.key()) throw CaseMismatch({to_string(t.case_key)});
  const double s = single_agent_process_base(t.fine_evidence, ground_truth_profile(c));
  const int n_err = t.n_err_tool + (cfg.penalize_single_agent_output ? t.n_err_output : 0);
  return compose_breakdown(outcome_reward(t.predicted_class, c.gold_class, cfg), s, n_err, scheme, cfg);
}

inline RewardBreakdown grade_trajectory(const Trajectory& t, const CaseRecord& c, RewardScheme scheme,
                                        const RewardConfig& cfg = {}) {
  return std::visit([&](const auto& v) { return grade_trajectory(v, c, scheme, cfg); }, t);
}

inline json to_json(const RewardBreakdown& b) {
  json j = json::object();
  j["r_out"] = b.r_out;
  j["s"] = b.s;
  j["r_proc"] = b.r_proc;
  j["n_err"] = b.n_err;
  j["r_hybrid"] = b.r_hybrid;
  j["scheme"] = scheme_name(b.scheme);
  return j;
}

}  // namespace gdvrl
