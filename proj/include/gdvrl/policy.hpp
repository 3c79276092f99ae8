#pragma once

// Desk-scale parametric supervisor. The action space factorizes into one
// Bernoulli invocation per (category, document), with logit
// w_k . [features_j, 1] / T, followed by one categorical classification over
// the 5 validity classes with logits V . [observed subtype counts, 1] / T.
// Log-probabilities and their gradients are exact.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "gdvrl/case_store.hpp"
#include "gdvrl/errors.hpp"
#include "gdvrl/orchestration.hpp"
#include "gdvrl/random.hpp"
#include "gdvrl/synthetic.hpp"

namespace gdvrl {

class UnrepresentableTrajectory : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline constexpr int kRoutingInputs = kNumCategories + 1;  // features + bias
inline constexpr int kClassInputs = kNumCategories + 1;    // subtype counts + bias
inline constexpr int kRoutingParams = kNumCategories * kRoutingInputs;
inline constexpr int kClassParams = kNumValidityClasses * kClassInputs;
inline constexpr int kPolicyParams = kRoutingParams + kClassParams;

using RoutingInput = std::array<double, kRoutingInputs>;
using ClassInput = std::array<double, kClassInputs>;

class ParametricSupervisorPolicy {
 public:
  explicit ParametricSupervisorPolicy(double temperature = 1.0)
      : params_(static_cast<std::size_t>(kPolicyParams), 0.0), temperature_(temperature) {
    if (!(temperature > 0.0)) throw InvalidConfig("temperature must be positive");
  }

  double temperature() const noexcept { return temperature_; }
  void set_temperature(double t) {
    if (!(t > 0.0)) throw InvalidConfig("temperature must be positive");
    temperature_ = t;
  }

  std::span<double> params() noexcept { return params_; }
  std::span<const double> params() const noexcept { return params_; }

  double& routing_weight(EvidenceCategory k, int input) {
    return params_[static_cast<std::size_t>(index_of(k) * kRoutingInputs + input)];
  }
  double routing_weight(EvidenceCategory k, int input) const {
    return params_[static_cast<std::size_t>(index_of(k) * kRoutingInputs + input)];
  }
  double& class_weight(int cls, int input) {
    return params_[static_cast<std::size_t>(kRoutingParams + cls * kClassInputs + input)];
  }
  double class_weight(int cls, int input) const {
    return params_[static_cast<std::size_t>(kRoutingParams + cls * kClassInputs + input)];
  }

  bool finite() const {
    return std::all_of(params_.begin(), params_.end(), [](double v) { return std::isfinite(v); });
  }

  /// Tempered invocation logit.
  double routing_logit(EvidenceCategory k, const RoutingInput& x) const {
    double z = 0.0;
    for (int d = 0; d < kRoutingInputs; ++d) z += routing_weight(k, d) * x[static_cast<std::size_t>(d)];
    return z / temperature_;
  }

  /// Tempered class logits.
  std::array<double, kNumValidityClasses> class_logits(const ClassInput& h) const {
    std::array<double, kNumValidityClasses> z{};
    for (int c = 0; c < kNumValidityClasses; ++c) {
      double v = 0.0;
      for (int d = 0; d < kClassInputs; ++d) v += class_weight(c, d) * h[static_cast<std::size_t>(d)];
      z[static_cast<std::size_t>(c)] = v / temperature_;
    }
    return z;
  }

  friend bool operator==(const ParametricSupervisorPolicy&, const ParametricSupervisorPolicy&) = default;

 private:
  std::vector<double> params_;
  double temperature_;
};

// ---------------------------------------------------------------------------
// Numerics
// ---------------------------------------------------------------------------

namespace detail {

inline double sigmoid(double z) {
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

/// log(sigmoid(z)), stable for large |z|.
inline double log_sigmoid(double z) { return z >= 0.0 ? -std::log1p(std::exp(-z)) : z - std::log1p(std::exp(z)); }

inline std::array<double, kNumValidityClasses> log_softmax(const std::array<double, kNumValidityClasses>& z) {
  const double m = *std::max_element(z.begin(), z.end());
  double sum = 0.0;
  for (double v : z) sum += std::exp(v - m);
  const double lse = m + std::log(sum);
  std::array<double, kNumValidityClasses> out{};
  for (std::size_t i = 0; i < z.size(); ++i) out[i] = z[i] - lse;
  return out;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Case features and actions
// ---------------------------------------------------------------------------

/// Routing inputs for every article of a case, in article order.
struct CaseFeatures {
  std::vector<RoutingInput> documents;
};

inline CaseFeatures case_features(const CaseRecord& c) {
  CaseFeatures out;
  out.documents.reserve(c.articles.size());
  for (const auto& a : c.articles) {
    const auto f = article_features(a);
    RoutingInput x{};
    std::copy(f.begin(), f.end(), x.begin());
    x[kNumCategories] = 1.0;
    out.documents.push_back(x);
  }
  return out;
}

/// Classification inputs: distinct observed (pmid, subtype) pairs per
/// category, plus a bias term.
inline ClassInput observation_summary(const std::vector<EvidenceFinding>& observations) {
  std::set<std::pair<std::string, EvidenceSubtype>> seen;
  ClassInput h{};
  for (const auto& o : observations) {
    for (const auto& s : o.subtypes) {
      if (seen.emplace(o.pmid, s).second) h[static_cast<std::size_t>(index_of(s.category()))] += 1.0;
    }
  }
  h[kNumCategories] = 1.0;
  return h;
}

/// The policy-level view of a supervisor trajectory.
struct PolicyActions {
  std::vector<std::array<bool, kNumCategories>> invoke;  ///< [document][category]
  ClassInput summary{};
  int cls = 0;
};

inline PolicyActions actions_from_trajectory(const SupervisorTrajectory& t, const CaseRecord& c) {
  if (t.n_err > 0) throw UnrepresentableTrajectory("trajectory contains malformed tool blocks");
  if (!t.predicted_class) throw UnrepresentableTrajectory("trajectory has no classification");
  if (t.observations.size() != t.calls.size()) throw UnrepresentableTrajectory("observations do not align with calls");
  PolicyActions a;
  a.invoke.assign(c.articles.size(), {});
  for (const auto& call : t.calls) {
    if (call.gene != c.gene || call.disease != c.disease) {
      throw UnrepresentableTrajectory("call arguments do not match the case");
    }
    bool matched = false;
    for (std::size_t j = 0; j < c.articles.size(); ++j) {
      if (c.articles[j].pmid == call.pmid && c.articles[j].pmcid == call.pmcid) {
        a.invoke[j][static_cast<std::size_t>(index_of(call.category))] = true;
        matched = true;
        break;
      }
    }
    if (!matched) throw UnrepresentableTrajectory("call references a document outside the case");
  }
  a.summary = observation_summary(t.observations);
  a.cls = rank(*t.predicted_class);
  return a;
}

inline double policy_logprob(const ParametricSupervisorPolicy& policy, const PolicyActions& a,
                             const CaseFeatures& features) {
  double lp = 0.0;
  for (std::size_t j = 0; j < features.documents.size(); ++j) {
    for (auto k : kAllCategories) {
      const double z = policy.routing_logit(k, features.documents[j]);
      lp += a.invoke[j][static_cast<std::size_t>(index_of(k))] ? detail::log_sigmoid(z) : detail::log_sigmoid(-z);
    }
  }
  lp += detail::log_softmax(policy.class_logits(a.summary))[static_cast<std::size_t>(a.cls)];
  return lp;
}

/// Sum of log Bernoulli invocation terms and the log class probability.
inline double policy_logprob(const ParametricSupervisorPolicy& policy, const SupervisorTrajectory& t,
                             const CaseRecord& c) {
  return policy_logprob(policy, actions_from_trajectory(t, c), case_features(c));
}

/// Adds scale * d logprob / d params into grad.
inline void accumulate_logprob_gradient(const ParametricSupervisorPolicy& policy, const PolicyActions& a,
                                        const CaseFeatures& features, double scale, std::span<double> grad) {
  const double inv_t = 1.0 / policy.temperature();
  for (std::size_t j = 0; j < features.documents.size(); ++j) {
    const auto& x = features.documents[j];
    for (auto k : kAllCategories) {
      const double p = detail::sigmoid(policy.routing_logit(k, x));
      const double b = a.invoke[j][static_cast<std::size_t>(index_of(k))] ? 1.0 : 0.0;
      const double coef = scale * (b - p) * inv_t;
      for (int d = 0; d < kRoutingInputs; ++d) {
        grad[static_cast<std::size_t>(index_of(k) * kRoutingInputs + d)] += coef * x[static_cast<std::size_t>(d)];
      }
    }
  }
  const auto logp = detail::log_softmax(policy.class_logits(a.summary));
  for (int c = 0; c < kNumValidityClasses; ++c) {
    const double indicator = c == a.cls ? 1.0 : 0.0;
    const double coef = scale * (indicator - std::exp(logp[static_cast<std::size_t>(c)])) * inv_t;
    for (int d = 0; d < kClassInputs; ++d) {
      grad[static_cast<std::size_t>(kRoutingParams + c * kClassInputs + d)] +=
          coef * a.summary[static_cast<std::size_t>(d)];
    }
  }
}

// ---------------------------------------------------------------------------
// Acting
// ---------------------------------------------------------------------------

enum class Decoding { Sample, Greedy };

inline std::vector<ToolCall> choose_calls(const ParametricSupervisorPolicy& policy, const CaseRecord& c,
                                          const CaseFeatures& features, Decoding decoding, std::mt19937_64& rng) {
  std::vector<ToolCall> calls;
  for (std::size_t j = 0; j < c.articles.size(); ++j) {
    for (auto k : kAllCategories) {
      const double z = policy.routing_logit(k, features.documents[j]);
      const bool invoke = decoding == Decoding::Greedy ? z > 0.0 : uniform01(rng) < detail::sigmoid(z);
      if (invoke) calls.push_back(ToolCall{k, c.articles[j].pmid, c.articles[j].pmcid, c.gene, c.disease});
    }
  }
  return calls;
}

inline ValidityClass choose_class(const ParametricSupervisorPolicy& policy, const ClassInput& summary,
                                  Decoding decoding, std::mt19937_64& rng) {
  const auto logp = detail::log_softmax(policy.class_logits(summary));
  if (decoding == Decoding::Greedy) {
    return validity_from_rank(static_cast<int>(std::max_element(logp.begin(), logp.end()) - logp.begin()));
  }
  const double u = uniform01(rng);
  double acc = 0.0;
  for (int c = 0; c < kNumValidityClasses; ++c) {
    acc += std::exp(logp[static_cast<std::size_t>(c)]);
    if (u < acc) return validity_from_rank(c);
  }
  return validity_from_rank(kMaxRank);
}

/// One ground-truth-observed episode acted directly (no text round trip).
inline SupervisorTrajectory act(const ParametricSupervisorPolicy& policy, const CaseRecord& c,
                                const CaseFeatures& features, Decoding decoding, std::mt19937_64& rng) {
  SupervisorTrajectory t;
  t.case_key = c.key();
  t.calls = choose_calls(policy, c, features, decoding, rng);
  t.observations = inject_ground_truth(t.calls, c);
  t.predicted_class = choose_class(policy, observation_summary(t.observations), decoding, rng);
  return t;
}

/// Text-level adapter so the parametric policy can drive the generic episode
/// runner (and hence live backends).
class ParametricSupervisorAgent final : public SupervisorPolicy {
 public:
  ParametricSupervisorAgent(ParametricSupervisorPolicy policy, Decoding decoding, std::uint64_t seed = 0)
      : policy_(std::move(policy)), decoding_(decoding), seed_(seed) {}

  std::string tool_turn(const CaseRecord& c, const std::string&) override {
    rng_ = keyed_rng(seed_, {"episode", c.gene, c.disease, c.panel});
    std::string out;
    for (const auto& call : choose_calls(policy_, c, case_features(c), decoding_, rng_)) out += render_tool_block(call);
    return out;
  }

  std::string synthesis_turn(const CaseRecord&, const std::string&, const std::vector<ToolCall>&,
                             const std::vector<EvidenceFinding>& observations) override {
    const auto cls = choose_class(policy_, observation_summary(observations), decoding_, rng_);
    return "CLASSIFICATION: " + std::string(display_name(cls));
  }

 private:
  ParametricSupervisorPolicy policy_;
  Decoding decoding_;
  std::uint64_t seed_;
  std::mt19937_64 rng_;
};

/// Calls exactly the gold (category, document) pairs and answers the gold
/// class. Upper bound for every metric.
class OracleSupervisorPolicy final : public SupervisorPolicy {
 public:
  std::string tool_turn(const CaseRecord& c, const std::string&) override {
    std::string out;
    for (const auto& call : ground_truth_calls(c)) out += render_tool_block(call);
    return out;
  }
  std::string synthesis_turn(const CaseRecord& c, const std::string&, const std::vector<ToolCall>&,
                             const std::vector<EvidenceFinding>&) override {
    return "CLASSIFICATION: " + std::string(display_name(c.gold_class));
  }
};

/// Invokes each (category, document) pair with probability 1/2 and answers a
/// uniformly random class; seeded per case.
class RandomSupervisorPolicy final : public SupervisorPolicy {
 public:
  explicit RandomSupervisorPolicy(std::uint64_t seed) : seed_(seed) {}

  std::string tool_turn(const CaseRecord& c, const std::string&) override {
    rng_ = keyed_rng(seed_, {"random", c.gene, c.disease, c.panel});
    std::string out;
    for (const auto& a : c.articles) {
      for (auto k : kAllCategories) {
        if (uniform01(rng_) < 0.5) out += render_tool_block(ToolCall{k, a.pmid, a.pmcid, c.gene, c.disease});
      }
    }
    return out;
  }
  std::string synthesis_turn(const CaseRecord&, const std::string&, const std::vector<ToolCall>&,
                             const std::vector<EvidenceFinding>&) override {
    const int r = std::uniform_int_distribution<int>(0, kMaxRank)(rng_);
    return "CLASSIFICATION: " + std::string(display_name(validity_from_rank(r)));
  }

 private:
  std::uint64_t seed_;
  std::mt19937_64 rng_;
};

// ---------------------------------------------------------------------------
// Checkpoints
// ---------------------------------------------------------------------------

inline constexpr int kCheckpointVersion = 1;

inline json checkpoint_to_json(const ParametricSupervisorPolicy& p, const std::string& config_hash) {
  json routing = json::array();
  for (auto k : kAllCategories) {
    json row = json::array();
    for (int d = 0; d < kRoutingInputs; ++d) row.push_back(p.routing_weight(k, d));
    routing.push_back(std::move(row));
  }
  json cls = json::array();
  for (int c = 0; c < kNumValidityClasses; ++c) {
    json row = json::array();
    for (int d = 0; d < kClassInputs; ++d) row.push_back(p.class_weight(c, d));
    cls.push_back(std::move(row));
  }
  json j = json::object();
  j["version"] = kCheckpointVersion;
  j["config_hash"] = config_hash;
  j["temperature"] = p.temperature();
  j["routing_weights"] = std::move(routing);
  j["class_weights"] = std::move(cls);
  return j;
}

inline ParametricSupervisorPolicy checkpoint_from_json(const json& j) {
  if (!j.is_object() || j.value("version", 0) != kCheckpointVersion) {
    throw InvalidConfig("unsupported checkpoint version");
  }
  ParametricSupervisorPolicy p(j.at("temperature").get<double>());
  const auto& routing = j.at("routing_weights");
  const auto& cls = j.at("class_weights");
  if (routing.size() != static_cast<std::size_t>(kNumCategories) ||
      cls.size() != static_cast<std::size_t>(kNumValidityClasses)) {
    throw InvalidConfig("checkpoint weight shapes do not match the policy");
  }
  for (auto k : kAllCategories) {
    const auto& row = routing[static_cast<std::size_t>(index_of(k))];
    if (row.size() != static_cast<std::size_t>(kRoutingInputs)) throw InvalidConfig("bad routing row");
    for (int d = 0; d < kRoutingInputs; ++d) p.routing_weight(k, d) = row[static_cast<std::size_t>(d)].get<double>();
  }
  for (int c = 0; c < kNumValidityClasses; ++c) {
    const auto& row = cls[static_cast<std::size_t>(c)];
    if (row.size() != static_cast<std::size_t>(kClassInputs)) throw InvalidConfig("bad class row");
    for (int d = 0; d < kClassInputs; ++d) p.class_weight(c, d) = row[static_cast<std::size_t>(d)].get<double>();
  }
  if (!p.finite()) throw InvalidConfig("checkpoint contains non-finite weights");
  return p;
}

}  // namespace gdvrl
