#pragma once

// Group Relative Policy Optimization for the parametric supervisor.
//
// For every case a group of G trajectories is sampled from the frozen policy
// with ground-truth observations injected. Rewards are normalized within the
// group, A_i = (R_i - mean) / (std + delta) with the population std, and the
// policy minimizes
//
//   L = -(1/G) sum_i min(rho_i A_i, clip(rho_i, 1 - eps_low, 1 + eps_high) A_i)
//
// with rho_i = exp(logpi(tau_i) - logpi_old(tau_i)) and no KL term.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <map>
#include <numeric>
#include <optional>
#include <random>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "gdvrl/case_store.hpp"
#include "gdvrl/errors.hpp"
#include "gdvrl/policy.hpp"
#include "gdvrl/random.hpp"
#include "gdvrl/reward.hpp"

namespace gdvrl {

class LengthMismatch : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class NonFiniteLoss : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct TrainConfig {
  int group_size = 8;
  int batch_size = 16;      ///< cases per optimizer step
  int minibatch_size = 8;   ///< groups per gradient update
  double learning_rate = 1e-2;
  double clip_low = 0.2;
  double clip_high = 0.35;
  int epochs = 5;
  double temperature = 0.8;
  double adv_delta = 1e-6;
  int val_rollouts = 4;
  RewardScheme scheme = RewardScheme::Hybrid;
  std::uint64_t seed = 0;
  RewardConfig reward;

  void validate() const {
    if (group_size < 2) throw InvalidConfig("group_size must be at least 2");
    if (batch_size < 1 || minibatch_size < 1) throw InvalidConfig("batch sizes must be positive");
    if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate)) throw InvalidConfig("learning_rate must be >= 0");
    if (!(clip_low > 0.0 && clip_low < 1.0)) throw InvalidConfig("clip_low must lie in (0,1)");
    if (!(clip_high > 0.0)) throw InvalidConfig("clip_high must be positive");
    if (epochs < 0) throw InvalidConfig("epochs must be nonnegative");
    if (!(temperature > 0.0)) throw InvalidConfig("temperature must be positive");
    if (!(adv_delta > 0.0)) throw InvalidConfig("adv_delta must be positive");
    if (val_rollouts < 1) throw InvalidConfig("val_rollouts must be positive");
    reward.validate();
  }
};

/// Flat key/value view of a training configuration (the config file format).
inline json to_json(const TrainConfig& c) {
  return json{{"group_size", c.group_size},
              {"batch_size", c.batch_size},
              {"minibatch_size", c.minibatch_size},
              {"learning_rate", c.learning_rate},
              {"clip_low", c.clip_low},
              {"clip_high", c.clip_high},
              {"epochs", c.epochs},
              {"temperature", c.temperature},
              {"adv_delta", c.adv_delta},
              {"val_rollouts", c.val_rollouts},
              {"scheme", scheme_name(c.scheme)},
              {"seed", c.seed},
              {"alpha", c.reward.alpha},
              {"sigma", c.reward.sigma},
              {"gamma", c.reward.gamma},
              {"lambda", c.reward.lambda},
              {"beta", c.reward.beta},
              {"reward_clip_low", c.reward.clip_low},
              {"reward_clip_high", c.reward.clip_high},
              {"penalize_single_agent_output", c.reward.penalize_single_agent_output}};
}

/// Overlays keys from a flat object onto `base`. Unknown keys are rejected.
inline TrainConfig train_config_from_json(const json& j, TrainConfig base = {}) {
  if (!j.is_object()) throw InvalidConfig("config must be a flat JSON object");
  for (const auto& [key, v] : j.items()) {
    try {
      if (key == "group_size") base.group_size = v.get<int>();
      else if (key == "batch_size") base.batch_size = v.get<int>();
      else if (key == "minibatch_size") base.minibatch_size = v.get<int>();
      else if (key == "learning_rate") base.learning_rate = v.get<double>();
      else if (key == "clip_low") base.clip_low = v.get<double>();
      else if (key == "clip_high") base.clip_high = v.get<double>();
      else if (key == "epochs") base.epochs = v.get<int>();
      else if (key == "temperature") base.temperature = v.get<double>();
      else if (key == "adv_delta") base.adv_delta = v.get<double>();
      else if (key == "val_rollouts") base.val_rollouts = v.get<int>();
      else if (key == "scheme") base.scheme = parse_scheme(v.get<std::string>());
      else if (key == "seed") base.seed = v.get<std::uint64_t>();
      else if (key == "alpha") base.reward.alpha = v.get<double>();
      else if (key == "sigma") base.reward.sigma = v.get<double>();
      else if (key == "gamma") base.reward.gamma = v.get<double>();
      else if (key == "lambda") base.reward.lambda = v.get<double>();
      else if (key == "beta") base.reward.beta = v.get<double>();
      else if (key == "reward_clip_low") base.reward.clip_low = v.get<double>();
      else if (key == "reward_clip_high") base.reward.clip_high = v.get<double>();
      else if (key == "penalize_single_agent_output") base.reward.penalize_single_agent_output = v.get<bool>();
      else throw InvalidConfig("unknown config key '" + key + "'");
    } catch (const json::exception& e) {
      throw InvalidConfig("config key '" + key + "': " + e.what());
    }
  }
  return base;
}

inline std::string config_hash(const TrainConfig& c) {
  std::ostringstream os;
  os << std::hex << fnv1a(to_json(c).dump());
  return os.str();
}

// ---------------------------------------------------------------------------
// Advantages and surrogate
// ---------------------------------------------------------------------------

/// (R_i - mean) / (population std + delta). Rewards are centered through
/// differences to the first reward, so adding an exactly representable
/// constant to the group leaves the result bit-identical.
inline std::vector<double> group_advantages(std::span<const double> rewards, double delta) {
  if (rewards.size() < 2) throw InvalidConfig("a group needs at least two rewards");
  const double n = static_cast<double>(rewards.size());
  std::vector<double> centered;
  centered.reserve(rewards.size());
  for (double r : rewards) centered.push_back(r - rewards[0]);
  const double offset = std::accumulate(centered.begin(), centered.end(), 0.0) / n;
  double var = 0.0;
  for (auto& d : centered) {
    d -= offset;
    var += d * d;
  }
  const double denom = std::sqrt(var / n) + delta;
  std::vector<double> out;
  out.reserve(rewards.size());
  for (double d : centered) out.push_back(d == 0.0 ? 0.0 : d / denom);
  return out;
}

inline double clipped_term(double ratio, double advantage, double clip_low, double clip_high) {
  const double clipped = std::clamp(ratio, 1.0 - clip_low, 1.0 + clip_high);
  return std::min(ratio * advantage, clipped * advantage);
}

/// Whether the unclipped branch is the one selected (and so carries gradient).
inline bool unclipped_branch_active(double ratio, double advantage, double clip_low, double clip_high) {
  const double clipped = std::clamp(ratio, 1.0 - clip_low, 1.0 + clip_high);
  return ratio * advantage <= clipped * advantage;
}

inline double clipped_surrogate_loss(std::span<const double> ratios, std::span<const double> advantages,
                                     double clip_low, double clip_high) {
  if (ratios.size() != advantages.size()) throw LengthMismatch("ratios and advantages differ in length");
  if (ratios.empty()) return 0.0;
  double sum = 0.0;
  for (std::size_t i = 0; i < ratios.size(); ++i) sum += clipped_term(ratios[i], advantages[i], clip_low, clip_high);
  return -sum / static_cast<double>(ratios.size());
}

inline double clipped_surrogate_loss(std::span<const double> ratios, std::span<const double> advantages,
                                     const TrainConfig& cfg) {
  return clipped_surrogate_loss(ratios, advantages, cfg.clip_low, cfg.clip_high);
}

// ---------------------------------------------------------------------------
// Groups
// ---------------------------------------------------------------------------

struct GroupSample {
  CaseKey case_key;
  std::vector<SupervisorTrajectory> trajectories;
  std::vector<PolicyActions> actions;
  std::vector<double> logprobs_old;
  std::vector<RewardBreakdown> breakdowns;
  std::vector<double> rewards;
  std::vector<double> advantages;
};

/// Samples G trajectories with injected ground-truth observations and grades
/// them under the configured scheme.
inline GroupSample sample_group(const ParametricSupervisorPolicy& policy, const CaseRecord& c,
                                const CaseFeatures& features, const TrainConfig& cfg, std::mt19937_64& rng) {
  GroupSample g;
  g.case_key = c.key();
  for (int i = 0; i < cfg.group_size; ++i) {
    auto t = act(policy, c, features, Decoding::Sample, rng);
    auto a = actions_from_trajectory(t, c);
    g.logprobs_old.push_back(policy_logprob(policy, a, features));
    auto b = grade_trajectory(t, c, cfg.scheme, cfg.reward);
    g.rewards.push_back(b.r_hybrid);
    g.breakdowns.push_back(b);
    g.trajectories.push_back(std::move(t));
    g.actions.push_back(std::move(a));
  }
  g.advantages = group_advantages(g.rewards, cfg.adv_delta);
  return g;
}

inline GroupSample sample_group(const ParametricSupervisorPolicy& policy, const CaseRecord& c, const TrainConfig& cfg,
                                std::mt19937_64& rng) {
  return sample_group(policy, c, case_features(c), cfg, rng);
}

/// A group paired with the features of its case.
struct GroupRef {
  const GroupSample* group;
  const CaseFeatures* features;
};

/// Surrogate loss averaged over groups, with its analytic gradient written to
/// `grad` (resized to the parameter count) when given.
inline double surrogate_loss_and_grad(const ParametricSupervisorPolicy& policy, std::span<const GroupRef> groups,
                                      const TrainConfig& cfg, std::vector<double>* grad) {
  if (grad != nullptr) grad->assign(static_cast<std::size_t>(kPolicyParams), 0.0);
  if (groups.empty()) return 0.0;
  const double n_groups = static_cast<double>(groups.size());
  double loss = 0.0;
  for (const auto& ref : groups) {
    const auto& g = *ref.group;
    const auto n = g.actions.size();
    std::vector<double> ratios(n);
    for (std::size_t i = 0; i < n; ++i) {
      ratios[i] = std::exp(policy_logprob(policy, g.actions[i], *ref.features) - g.logprobs_old[i]);
    }
    loss += clipped_surrogate_loss(ratios, g.advantages, cfg) / n_groups;
    if (grad == nullptr) continue;
    for (std::size_t i = 0; i < n; ++i) {
      if (g.advantages[i] == 0.0) continue;
      if (!unclipped_branch_active(ratios[i], g.advantages[i], cfg.clip_low, cfg.clip_high)) continue;
      // d/dtheta of -(1/G) rho A  =  -(1/G) rho A dlogpi
      const double scale = -ratios[i] * g.advantages[i] / (static_cast<double>(n) * n_groups);
      accumulate_logprob_gradient(policy, g.actions[i], *ref.features, scale, *grad);
    }
  }
  return loss;
}

/// Compares the analytic surrogate gradient against central differences on
/// `n_params` randomly chosen parameters. The relative error of a component
/// is |analytic - numeric| / max(|analytic|, |numeric|, 1e-4); the floor keeps
/// near-zero components from amplifying rounding noise.
inline double gradient_check(const ParametricSupervisorPolicy& policy, const GroupSample& group,
                             const CaseFeatures& features, const TrainConfig& cfg, std::mt19937_64& rng,
                             int n_params = 20, double step = 1e-5) {
  const GroupRef ref{&group, &features};
  std::vector<double> analytic;
  surrogate_loss_and_grad(policy, std::span<const GroupRef>(&ref, 1), cfg, &analytic);

  std::vector<int> indices(static_cast<std::size_t>(kPolicyParams));
  std::iota(indices.begin(), indices.end(), 0);
  std::shuffle(indices.begin(), indices.end(), rng);
  indices.resize(static_cast<std::size_t>(std::clamp(n_params, 1, kPolicyParams)));

  double worst = 0.0;
  auto probe = policy;
  for (int idx : indices) {
    auto& w = probe.params()[static_cast<std::size_t>(idx)];
    const double saved = w;
    w = saved + step;
    const double up = surrogate_loss_and_grad(probe, std::span<const GroupRef>(&ref, 1), cfg, nullptr);
    w = saved - step;
    const double down = surrogate_loss_and_grad(probe, std::span<const GroupRef>(&ref, 1), cfg, nullptr);
    w = saved;
    const double numeric = (up - down) / (2.0 * step);
    const double a = analytic[static_cast<std::size_t>(idx)];
    const double denom = std::max({std::abs(a), std::abs(numeric), 1e-4});
    worst = std::max(worst, std::abs(a - numeric) / denom);
  }
  return worst;
}

// ---------------------------------------------------------------------------
// Training loop
// ---------------------------------------------------------------------------

struct CurvePoint {
  int step = 0;
  double mean_reward = 0.0;
  double mean_r_out = 0.0;
  double mean_r_proc = 0.0;
  double mean_s = 0.0;
  std::optional<double> outcome_acc_on_dev;
};

struct TrainResult {
  ParametricSupervisorPolicy policy;
  std::vector<CurvePoint> curve;
  std::vector<ParametricSupervisorPolicy> checkpoints;  ///< one per completed epoch
};

/// Mean outcome accuracy over `val_rollouts` sampled episodes per case.
inline double sampled_outcome_accuracy(const ParametricSupervisorPolicy& policy, const std::vector<CaseRecord>& cases,
                                       const std::vector<CaseFeatures>& features, int rollouts, std::uint64_t seed,
                                       int step) {
  std::size_t hits = 0;
  std::size_t total = 0;
  for (std::size_t i = 0; i < cases.size(); ++i) {
    const auto& c = cases[i];
    auto rng = keyed_rng(seed, {"dev", std::to_string(step), c.gene, c.disease, c.panel});
    for (int r = 0; r < rollouts; ++r) {
      const auto t = act(policy, c, features[i], Decoding::Sample, rng);
      hits += (t.predicted_class && *t.predicted_class == c.gold_class) ? 1 : 0;
      ++total;
    }
  }
  return total == 0 ? 0.0 : static_cast<double>(hits) / static_cast<double>(total);
}

/// Runs epochs * ceil(|train| / batch_size) optimizer steps, starting from
/// `initial` (zero weights by default). Each step samples one group per case
/// of the batch from the frozen policy, then applies one plain gradient step
/// per minibatch of groups. Deterministic for a fixed seed.
inline TrainResult train(const std::vector<CaseRecord>& train_cases, const std::vector<CaseRecord>& dev_cases,
                         const TrainConfig& cfg, std::optional<ParametricSupervisorPolicy> initial = std::nullopt,
                         const std::function<void(const CurvePoint&)>& on_step = {}) {
  cfg.validate();
  if (train_cases.empty()) throw InvalidConfig("training corpus is empty");

  TrainResult result{initial.value_or(ParametricSupervisorPolicy(cfg.temperature)), {}, {}};
  auto& policy = result.policy;
  policy.set_temperature(cfg.temperature);

  std::vector<CaseFeatures> train_features;
  for (const auto& c : train_cases) train_features.push_back(case_features(c));
  std::vector<CaseFeatures> dev_features;
  for (const auto& c : dev_cases) dev_features.push_back(case_features(c));

  const auto batch = static_cast<std::size_t>(cfg.batch_size);
  const auto mini = static_cast<std::size_t>(cfg.minibatch_size);
  std::vector<std::size_t> order(train_cases.size());
  int step = 0;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    auto shuffle_rng = keyed_rng(cfg.seed, {"epoch", std::to_string(epoch)});
    std::shuffle(order.begin(), order.end(), shuffle_rng);

    for (std::size_t start = 0; start < order.size(); start += batch) {
      const auto stop = std::min(order.size(), start + batch);
      std::vector<GroupSample> groups;
      std::vector<const CaseFeatures*> features;
      CurvePoint point;
      point.step = step;
      double count = 0.0;
      for (std::size_t b = start; b < stop; ++b) {
        const auto& c = train_cases[order[b]];
        auto rng = keyed_rng(cfg.seed, {"rollout", std::to_string(step), c.gene, c.disease, c.panel});
        groups.push_back(sample_group(policy, c, train_features[order[b]], cfg, rng));
        features.push_back(&train_features[order[b]]);
        for (const auto& br : groups.back().breakdowns) {
          point.mean_reward += br.r_hybrid;
          point.mean_r_out += br.r_out;
          point.mean_r_proc += br.r_proc;
          point.mean_s += br.s;
          count += 1.0;
        }
      }
      point.mean_reward /= count;
      point.mean_r_out /= count;
      point.mean_r_proc /= count;
      point.mean_s /= count;

      std::vector<double> grad;
      for (std::size_t m = 0; m < groups.size(); m += mini) {
        std::vector<GroupRef> refs;
        for (std::size_t i = m; i < std::min(groups.size(), m + mini); ++i) refs.push_back({&groups[i], features[i]});
        const double loss = surrogate_loss_and_grad(policy, refs, cfg, &grad);
        if (!std::isfinite(loss) ||
            !std::all_of(grad.begin(), grad.end(), [](double v) { return std::isfinite(v); })) {
          throw NonFiniteLoss("non-finite surrogate loss or gradient at step " + std::to_string(step) +
                              " (loss=" + std::to_string(loss) + ")");
        }
        auto params = policy.params();
        for (std::size_t p = 0; p < params.size(); ++p) params[p] -= cfg.learning_rate * grad[p];
      }

      if (!dev_cases.empty()) {
        point.outcome_acc_on_dev =
            sampled_outcome_accuracy(policy, dev_cases, dev_features, cfg.val_rollouts, cfg.seed, step);
      }
      result.curve.push_back(point);
      if (on_step) on_step(point);
      ++step;
    }
    result.checkpoints.push_back(policy);
  }
  return result;
}

inline std::string curve_csv_header() { return "step,mean_reward,mean_r_out,mean_r_proc,mean_s,outcome_acc_on_dev"; }

inline std::string curve_csv_row(const CurvePoint& p) {
  std::ostringstream os;
  os.precision(10);
  os << p.step << ',' << p.mean_reward << ',' << p.mean_r_out << ',' << p.mean_r_proc << ',' << p.mean_s << ',';
  if (p.outcome_acc_on_dev) os << *p.outcome_acc_on_dev;
  return os.str();
}

}  // namespace gdvrl
