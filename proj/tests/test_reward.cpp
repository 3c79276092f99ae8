#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "gdvrl/reward.hpp"
#include "gdvrl/synthetic.hpp"
#include "oracles.hpp"
#include "support.hpp"

using namespace gdvrl;
using gdvrl::testing::curated_cases;
using gdvrl::testing::curated_trajectories;
using gdvrl::testing::call_for;
using gdvrl::testing::case_for;
using gdvrl::testing::make_case;

namespace {

const CaseRecord& case_of(const std::vector<CaseRecord>& cases, const Trajectory& t) {
  for (const auto& c : cases) {
    if (c.key() == case_key_of(t)) return c;
  }
  throw std::out_of_range("no case");
}

/// 6 categories x 2 documents.
std::vector<ToolCall> call_universe() {
  std::vector<ToolCall> out;
  for (auto k : kAllCategories) {
    for (int d = 0; d < 2; ++d) out.push_back({k, "p" + std::to_string(d), "c" + std::to_string(d), "G", "D"});
  }
  return out;
}

}  // namespace

TEST(OutcomeReward, ValuesByRankDistance) {
  EXPECT_EQ(outcome_reward(ValidityClass::Definitive, ValidityClass::Definitive), 4.0);
  EXPECT_EQ(outcome_reward(ValidityClass::Strong, ValidityClass::Definitive), 2.0);
  EXPECT_EQ(outcome_reward(ValidityClass::Moderate, ValidityClass::Definitive), 0.0);
  EXPECT_EQ(outcome_reward(ValidityClass::Limited, ValidityClass::Definitive), -2.0);
  EXPECT_EQ(outcome_reward(ValidityClass::NoKnownDiseaseRelationship, ValidityClass::Definitive), -4.0);
  EXPECT_EQ(outcome_reward(std::nullopt, ValidityClass::Moderate), -4.0);
}

TEST(OutcomeReward, SymmetricAndBounded) {
  for (auto a : kAllValidityClasses) {
    for (auto b : kAllValidityClasses) {
      const double r = outcome_reward(a, b);
      EXPECT_EQ(r, outcome_reward(b, a));
      EXPECT_GE(r, -4.0);
      EXPECT_LE(r, 4.0);
      EXPECT_EQ(r == 4.0, a == b);
    }
  }
}

TEST(ProcessReward, Endpoints) {
  EXPECT_EQ(process_reward(1.0, 0), 4.0);
  EXPECT_EQ(process_reward(0.0, 0), -4.0);
  EXPECT_EQ(process_reward(1.0, 1), 3.5);
  EXPECT_EQ(process_reward(0.0, 3), -4.0);
}

TEST(ProcessReward, ZeroCrossingAtCubeRootOfHalf) {
  const double root = std::cbrt(0.5);
  EXPECT_GT(root, 0.7936);
  EXPECT_LT(root, 0.7938);
  EXPECT_NEAR(process_reward(root, 0), 0.0, 1e-12);
  EXPECT_LT(process_reward(0.7936, 0), 0.0);
  EXPECT_GT(process_reward(0.7938, 0), 0.0);
}

TEST(ProcessReward, MonotoneAndClipped) {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int i = 0; i < 1000; ++i) {
    const double a = u(rng);
    const double b = u(rng);
    const int n = static_cast<int>(rng() % 20);
    const double ra = process_reward(a, n);
    EXPECT_GE(ra, -4.0);
    EXPECT_LE(ra, 4.0);
    if (a <= b) {
      EXPECT_LE(ra, process_reward(b, n));
    }
    EXPECT_GE(ra, process_reward(a, n + 1));
  }
}

TEST(HybridReward, Polr1dTraces) {
  const auto cases = curated_cases();
  const auto log = curated_trajectories();
  for (int i : {0, 1}) {
    const auto b = grade_trajectory(log[static_cast<std::size_t>(i)], case_of(cases, log[static_cast<std::size_t>(i)]),
                                    RewardScheme::Hybrid);
    EXPECT_NEAR(b.s, 1.0, 1e-9);
    EXPECT_NEAR(b.r_hybrid, 4.0, 1e-9);
  }
}

TEST(HybridReward, OcrlTraces) {
  const auto cases = curated_cases();
  const auto log = curated_trajectories();
  const auto multi = grade_trajectory(log[3], case_of(cases, log[3]), RewardScheme::Hybrid);
  EXPECT_NEAR(multi.s, 1.0, 1e-9);
  EXPECT_NEAR(multi.r_hybrid, 4.0, 1e-9);
  const auto single = grade_trajectory(log[2], case_of(cases, log[2]), RewardScheme::Hybrid);
  EXPECT_NEAR(single.s, 2.0 / 3.0, 1e-9);
  EXPECT_NEAR(single.r_proc, -44.0 / 27.0, 1e-9);
  EXPECT_NEAR(single.r_out, 4.0, 1e-9);
  EXPECT_NEAR(single.r_hybrid, 32.0 / 27.0, 1e-9);
  EXPECT_NEAR(single.r_hybrid, 1.1852, 1e-4);
}

TEST(HybridReward, OutcomeOnlyIgnoresProcess) {
  const auto cases = curated_cases();
  const auto log = curated_trajectories();
  const auto b = grade_trajectory(log[2], case_of(cases, log[2]), RewardScheme::OutcomeOnly);
  EXPECT_EQ(b.r_hybrid, b.r_out);
  EXPECT_NEAR(b.r_proc, -44.0 / 27.0, 1e-9);
}

TEST(HybridReward, WrongCaseIsMismatch) {
  const auto cases = curated_cases();
  const auto log = curated_trajectories();
  EXPECT_THROW(grade_trajectory(log[0], case_for(cases, "OCRL"), RewardScheme::Hybrid), CaseMismatch);
}

TEST(HybridReward, EmptyGoldRewardsAbstention) {
  const auto c = make_case("G", {{}}, ValidityClass::Limited);
  SupervisorTrajectory t;
  t.case_key = c.key();
  t.predicted_class = ValidityClass::Limited;
  const auto quiet = grade_trajectory(t, c, RewardScheme::Hybrid);
  EXPECT_EQ(quiet.s, 1.0);
  EXPECT_EQ(quiet.r_hybrid, 4.0);
  t.calls = {call_for(c, EvidenceCategory::Rescue, 0)};
  EXPECT_EQ(grade_trajectory(t, c, RewardScheme::Hybrid).s, 0.0);
}

TEST(HybridReward, SingleAgentOutputPenaltyIsConfigurable) {
  const auto c = make_case("G", {{}}, ValidityClass::Limited);
  SingleAgentTrajectory t;
  t.case_key = c.key();
  t.predicted_class = ValidityClass::Limited;
  t.n_err_output = 2;
  EXPECT_EQ(grade_trajectory(t, c, RewardScheme::Hybrid).n_err, 2);
  RewardConfig lenient;
  lenient.penalize_single_agent_output = false;
  EXPECT_EQ(grade_trajectory(t, c, RewardScheme::Hybrid, lenient).n_err, 0);
}

TEST(SetF1, MatchesBruteForceOnCalls) {
  const auto universe = call_universe();
  const auto subsets = gdvrl::testing::small_subsets(static_cast<int>(universe.size()), 4);
  auto to_set = [&](const std::vector<int>& idx) {
    ToolCallSet s;
    for (int i : idx) s.insert(universe[static_cast<std::size_t>(i)]);
    return s;
  };
  for (std::size_t a = 0; a < subsets.size(); a += 3) {
    const auto pa = to_set(subsets[a]);
    for (const auto& gb : subsets) {
      ASSERT_NEAR(call_alignment_f1(pa, to_set(gb)), gdvrl::testing::reference_f1(subsets[a], gb), 1e-12);
    }
  }
}

TEST(SetF1, MatchesBruteForceOnProfiles) {
  std::vector<ProfileItem> universe;
  for (auto k : kAllCategories) {
    for (int d = 0; d < 2; ++d) universe.push_back({"p" + std::to_string(d), EvidenceSubtype{k, d % subtype_count(k)}});
  }
  const auto subsets = gdvrl::testing::small_subsets(static_cast<int>(universe.size()), 4);
  auto to_set = [&](const std::vector<int>& idx) {
    EvidenceProfile s;
    for (int i : idx) s.insert(universe[static_cast<std::size_t>(i)]);
    return s;
  };
  for (std::size_t a = 1; a < subsets.size(); a += 3) {
    const auto pa = to_set(subsets[a]);
    for (const auto& gb : subsets) {
      ASSERT_NEAR(single_agent_process_base(pa, to_set(gb)), gdvrl::testing::reference_f1(subsets[a], gb), 1e-12);
    }
  }
}

TEST(SetF1, Properties) {
  const auto universe = call_universe();
  std::mt19937_64 rng(11);
  for (int i = 0; i < 500; ++i) {
    ToolCallSet a, b;
    for (const auto& c : universe) {
      if (rng() % 3 == 0) a.insert(c);
      if (rng() % 3 == 0) b.insert(c);
    }
    const double f = call_alignment_f1(a, b);
    EXPECT_EQ(f, call_alignment_f1(b, a));
    EXPECT_GE(f, 0.0);
    EXPECT_LE(f, 1.0);
    EXPECT_EQ(f == 1.0, a == b);
  }
}

TEST(RewardConfig, Validation) {
  RewardConfig bad;
  bad.beta = 1.5;
  EXPECT_THROW(bad.validate(), InvalidConfig);
  EXPECT_EQ(parse_scheme("outcome"), RewardScheme::OutcomeOnly);
  EXPECT_THROW(parse_scheme("both"), InvalidConfig);
}

TEST(RewardBreakdown, JsonFields) {
  const auto j = to_json(compose_breakdown(4.0, 1.0, 0, RewardScheme::Hybrid, {}));
  EXPECT_EQ(j.dump(), R"({"n_err":0,"r_hybrid":4.0,"r_out":4.0,"r_proc":4.0,"s":1.0,"scheme":"hybrid"})");
}
