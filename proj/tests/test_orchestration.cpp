#include <gtest/gtest.h>

#include <atomic>
#include <random>
#include <sstream>

#include "gdvrl/backends.hpp"
#include "gdvrl/orchestration.hpp"
#include "gdvrl/synthetic.hpp"
#include "support.hpp"

using namespace gdvrl;
using gdvrl::testing::curated_cases;
using gdvrl::testing::call_for;
using gdvrl::testing::case_for;
using gdvrl::testing::fixture_path;
using gdvrl::testing::make_case;
using gdvrl::testing::slurp;

namespace {

const EvidenceSubtype kModelOrganism{EvidenceCategory::ModelSystem, 0};
const EvidenceSubtype kRescueOrganism{EvidenceCategory::Rescue, 2};

const std::string kPolr1dBlock =
    R"(<tool_call>{"name":"ExperimentalEvidence_ModelSystem_agent","args":{"pmid":"27448281","pmcid":"PMC4957770",)"
    R"("gene":"POLR1D","disease":"Treacher Collins syndrome 2"}}</tool_call>)";

class CountingBackend final : public AgentBackend {
 public:
  EvidenceFinding evaluate(const ToolCall& call, const CaseRecord& c) const override {
    ++count;
    return oracle_evaluate(call, c);
  }
  mutable std::atomic<int> count{0};
};

/// Completes later calls first, so ordering bugs would surface.
class ReverseDelayBackend final : public AgentBackend {
 public:
  EvidenceFinding evaluate(const ToolCall& call, const CaseRecord& c) const override {
    const int k = index_of(call.category);
    std::this_thread::sleep_for(std::chrono::milliseconds(5 * (6 - k)));
    return oracle_evaluate(call, c);
  }
};

class FailingBackend final : public AgentBackend {
 public:
  EvidenceFinding evaluate(const ToolCall&, const CaseRecord&) const override {
    throw BackendUnavailable("down");
  }
};

}  // namespace

TEST(RenderContext, SingleArticlePrefix) {
  const auto cases = curated_cases();
  const auto& c = case_for(cases, "POLR1D");
  const auto text = render_context(c);
  EXPECT_EQ(text, "Gene: POLR1D\nDisease: Treacher Collins syndrome 2\n\nPMID: 27448281, PMCID: PMC4957770\n" +
                      c.articles[0].abstract_text + "\n");
}

TEST(RenderContext, ArticlesInCaseOrder) {
  const auto c = make_case("G", {{}, {}, {}});
  const auto text = render_context(c);
  std::size_t last = 0;
  for (const auto& a : c.articles) {
    const auto pos = text.find("PMID: " + a.pmid + ", PMCID: " + a.pmcid + "\n");
    ASSERT_NE(pos, std::string::npos);
    EXPECT_GT(pos, last);
    last = pos;
  }
}

TEST(ParseToolBlocks, AttestedBlock) {
  const auto parsed = parse_tool_blocks(kPolr1dBlock);
  ASSERT_EQ(parsed.calls.size(), 1u);
  EXPECT_EQ(parsed.n_err, 0);
  EXPECT_EQ(parsed.calls[0], (ToolCall{EvidenceCategory::ModelSystem, "27448281", "PMC4957770", "POLR1D",
                                       "Treacher Collins syndrome 2"}));
}

TEST(ParseToolBlocks, InvalidJson) {
  const auto parsed = parse_tool_blocks("<tool_call>not json</tool_call>");
  EXPECT_TRUE(parsed.calls.empty());
  EXPECT_EQ(parsed.n_err, 1);
}

TEST(ParseToolBlocks, MissingArgument) {
  const auto parsed = parse_tool_blocks(
      R"(<tool_call>{"name":"ExperimentalEvidence_Rescue_agent","args":{"pmid":"1","gene":"G","disease":"D"}}</tool_call>)");
  EXPECT_TRUE(parsed.calls.empty());
  EXPECT_EQ(parsed.n_err, 1);
}

TEST(ParseToolBlocks, UnknownToolIsMalformed) {
  const auto parsed = parse_tool_blocks(
      R"(<tool_call>{"name":"ExperimentalEvidence_Foo_agent","args":{"pmid":"1","pmcid":"C","gene":"G","disease":"D"}}</tool_call>)");
  EXPECT_TRUE(parsed.calls.empty());
  EXPECT_EQ(parsed.n_err, 1);
}

TEST(ParseToolBlocks, EmptyArgumentIsMalformed) {
  const auto parsed = parse_tool_blocks(
      R"(<tool_call>{"name":"ExperimentalEvidence_Rescue_agent","args":{"pmid":"","pmcid":"C","gene":"G","disease":"D"}}</tool_call>)");
  EXPECT_EQ(parsed.n_err, 1);
}

TEST(ParseToolBlocks, DuplicatesKeptOnceInOrder) {
  const auto other = render_tool_block(
      ToolCall{EvidenceCategory::Rescue, "27448281", "PMC4957770", "POLR1D", "Treacher Collins syndrome 2"});
  const auto parsed = parse_tool_blocks(kPolr1dBlock + other + kPolr1dBlock);
  ASSERT_EQ(parsed.calls.size(), 2u);
  EXPECT_EQ(parsed.calls[0].category, EvidenceCategory::ModelSystem);
  EXPECT_EQ(parsed.calls[1].category, EvidenceCategory::Rescue);
  EXPECT_EQ(parsed.n_err, 0);
}

TEST(ParseToolBlocks, UnclosedAndNestedBlocks) {
  EXPECT_EQ(parse_tool_blocks("<tool_call>{\"name\":").n_err, 1);
  const auto nested = parse_tool_blocks("<tool_call>" + kPolr1dBlock);
  EXPECT_EQ(nested.n_err, 1);
  EXPECT_EQ(nested.calls.size(), 1u);
  EXPECT_EQ(parse_tool_blocks("text </tool_call> more").n_err, 0);
}

TEST(ParseToolBlocks, ExtraKeysAndIntegerPmid) {
  const auto parsed = parse_tool_blocks(
      R"(<tool_call>{"name":"ExperimentalEvidence_Rescue_agent","args":{"pmid":22210625,"pmcid":"PMC3313792","gene":"OCRL","disease":"d"},"type":"tool_call"}</tool_call>)");
  ASSERT_EQ(parsed.calls.size(), 1u);
  EXPECT_EQ(parsed.calls[0].pmid, "22210625");
}

TEST(ParseToolBlocks, WireFormatIsBitExact) {
  const ToolCall call{EvidenceCategory::ModelSystem, "27448281", "PMC4957770", "POLR1D", "Treacher Collins syndrome 2"};
  EXPECT_EQ(render_tool_block(call),
            R"(<tool_call>{"name": "ExperimentalEvidence_ModelSystem_agent", "args": {"pmid": "27448281", )"
            R"("pmcid": "PMC4957770", "gene": "POLR1D", "disease": "Treacher Collins syndrome 2"}}</tool_call>)");
  const auto parsed = parse_tool_blocks(render_tool_block(call));
  ASSERT_EQ(parsed.calls.size(), 1u);
  EXPECT_EQ(parsed.calls[0], call);
}

TEST(ParseToolBlocks, TotalityOverRandomText) {
  const std::array<std::string, 8> pieces = {
      "<tool_call>", "</tool_call>", kPolr1dBlock, "{\"name\":", "garbage", "\n", "{}", "\"args\":{}}"};
  std::mt19937_64 rng(17);
  for (int trial = 0; trial < 2000; ++trial) {
    std::string text;
    const int n = static_cast<int>(rng() % 12);
    for (int i = 0; i < n; ++i) text += pieces[rng() % pieces.size()];
    ParsedToolCalls parsed;
    ASSERT_NO_THROW(parsed = parse_tool_blocks(text));
    std::size_t closed = 0;
    for (const auto& b : scan_tool_blocks(text)) closed += b.content ? 1 : 0;
    std::size_t unique_valid = parsed.calls.size();
    // duplicates collapse, so count well-formed blocks separately
    std::size_t well_formed = 0;
    for (const auto& b : scan_tool_blocks(text)) {
      if (!b.content) continue;
      const auto j = json::parse(*b.content, nullptr, false);
      well_formed += (!j.is_discarded() && tool_call_from_json(j)) ? 1 : 0;
    }
    EXPECT_LE(unique_valid, well_formed);
    EXPECT_GE(well_formed + static_cast<std::size_t>(parsed.n_err), closed);
  }
}

TEST(StripToolBlocks, KeepsSurroundingText) {
  EXPECT_EQ(strip_tool_blocks("plan A" + kPolr1dBlock + " plan B"), "plan A plan B");
}

TEST(ExecuteBatch, OcrlOracleFindings) {
  const auto cases = curated_cases();
  const auto& c = case_for(cases, "OCRL");
  const std::vector<ToolCall> calls = {call_for(c, EvidenceCategory::ModelSystem, 0),
                                       call_for(c, EvidenceCategory::Rescue, 0)};
  OracleBackend oracle;
  const auto findings = execute_batch(calls, oracle, c);
  ASSERT_EQ(findings.size(), 2u);
  EXPECT_EQ(findings[0].subtypes, (std::set<EvidenceSubtype>{kModelOrganism}));
  EXPECT_EQ(findings[1].subtypes, (std::set<EvidenceSubtype>{kRescueOrganism}));
  EXPECT_EQ(kRescueOrganism, parse_subtype(EvidenceCategory::Rescue, "rescue in non-human model organism"));
}

TEST(ExecuteBatch, EmptyCalls) {
  OracleBackend oracle;
  EXPECT_TRUE(execute_batch({}, oracle, make_case("G", {{}})).empty());
}

TEST(ExecuteBatch, UnknownDocumentHasNoEvidence) {
  const auto cases = curated_cases();
  const auto& c = case_for(cases, "OCRL");
  auto call = call_for(c, EvidenceCategory::ModelSystem, 0);
  call.pmid = "999";
  OracleBackend oracle;
  const auto findings = execute_batch({call}, oracle, c);
  ASSERT_EQ(findings.size(), 1u);
  EXPECT_FALSE(findings[0].has_evidence());
  EXPECT_FALSE(findings[0].explanation.empty());
}

TEST(ExecuteBatch, OrderFollowsCallsUnderConcurrency) {
  const auto c = make_case("G", {{kModelOrganism, kRescueOrganism}});
  std::vector<ToolCall> calls;
  for (auto k : kAllCategories) calls.push_back(call_for(c, k, 0));
  ReverseDelayBackend backend;
  const auto findings = execute_batch(calls, backend, c);
  ASSERT_EQ(findings.size(), calls.size());
  for (std::size_t i = 0; i < calls.size(); ++i) {
    EXPECT_EQ(findings[i].category, calls[i].category);
    EXPECT_EQ(findings[i].pmid, calls[i].pmid);
  }
}

TEST(ExecuteBatch, DuplicatesEvaluatedOnce) {
  const auto c = make_case("G", {{kModelOrganism}});
  const auto call = call_for(c, EvidenceCategory::ModelSystem, 0);
  CountingBackend backend;
  const auto findings = execute_batch({call, call, call}, backend, c);
  EXPECT_EQ(findings.size(), 3u);
  EXPECT_EQ(backend.count.load(), 1);
}

TEST(ExecuteBatch, PropagatesBackendUnavailable) {
  const auto c = make_case("G", {{kModelOrganism}});
  FailingBackend backend;
  EXPECT_THROW(execute_batch({call_for(c, EvidenceCategory::ModelSystem, 0), call_for(c, EvidenceCategory::Rescue, 0)},
                             backend, c),
               BackendUnavailable);
}

TEST(InjectGroundTruth, Polr1dExamples) {
  const auto cases = curated_cases();
  const auto& c = case_for(cases, "POLR1D");
  const auto findings = inject_ground_truth(
      {call_for(c, EvidenceCategory::ModelSystem, 0), call_for(c, EvidenceCategory::Expression, 0)}, c);
  ASSERT_EQ(findings.size(), 2u);
  EXPECT_EQ(findings[0].subtypes, (std::set<EvidenceSubtype>{kModelOrganism}));
  EXPECT_NE(findings[0].explanation.find("zebrafish"), std::string::npos);
  EXPECT_FALSE(findings[1].has_evidence());
  EXPECT_TRUE(inject_ground_truth({}, c).empty());
}

TEST(InjectGroundTruth, GoldCallsReproduceGoldProfile) {
  for (const auto& c : generate_synthetic_corpus(CorpusConfig{.cases = 100, .max_articles = 4}, 5)) {
    const auto calls = ground_truth_calls(c);
    const auto findings = inject_ground_truth({calls.begin(), calls.end()}, c);
    EvidenceProfile observed;
    for (const auto& f : findings) {
      for (const auto& s : f.subtypes) {
        EXPECT_EQ(s.category(), f.category);
        observed.insert({f.pmid, s});
      }
    }
    EXPECT_EQ(observed, ground_truth_profile(c));
  }
}

TEST(SupervisorEpisode, Polr1dTraceTurns) {
  const auto cases = curated_cases();
  const auto& c = case_for(cases, "POLR1D");
  ScriptedSupervisorPolicy policy(slurp(fixture_path("traces/polr1d_multi_tool_turn.txt")),
                                  slurp(fixture_path("traces/polr1d_multi_synthesis.txt")));
  OracleBackend oracle;
  const auto t = run_supervisor_episode(policy, c, ObservationMode::Live, &oracle);
  ASSERT_EQ(t.calls.size(), 1u);
  EXPECT_EQ(t.calls[0].category, EvidenceCategory::ModelSystem);
  EXPECT_EQ(t.n_err, 0);
  EXPECT_EQ(t.predicted_class, ValidityClass::Definitive);
  EXPECT_EQ(t.call_set(), ground_truth_calls(c));
  EXPECT_EQ(t.plan_text.find("<tool_call>"), std::string::npos);
}

TEST(SupervisorEpisode, OcrlTraceWithRecordedObservations) {
  const auto cases = curated_cases();
  const auto& c = case_for(cases, "OCRL");
  ScriptedBackend replay;
  for (const auto& o : json::parse(slurp(fixture_path("traces/ocrl_observations.json")))) {
    replay.record(finding_from_json(o).finding);
  }
  ScriptedSupervisorPolicy policy(slurp(fixture_path("traces/ocrl_multi_tool_turn.txt")),
                                  slurp(fixture_path("traces/ocrl_multi_synthesis.txt")));
  const auto t = run_supervisor_episode(policy, c, ObservationMode::Live, &replay);
  ASSERT_EQ(t.calls.size(), 2u);
  EXPECT_EQ(t.predicted_profile(), ground_truth_profile(c));
  EXPECT_EQ(t.predicted_class, ValidityClass::Definitive);
}

TEST(SupervisorEpisode, NoToolBlocks) {
  const auto c = make_case("G", {{kModelOrganism}});
  ScriptedSupervisorPolicy policy("I will not call anyone.", "CLASSIFICATION: Limited");
  const auto t = run_supervisor_episode(policy, c, ObservationMode::GroundTruth);
  EXPECT_TRUE(t.calls.empty());
  EXPECT_TRUE(t.observations.empty());
  EXPECT_EQ(t.predicted_class, ValidityClass::Limited);
}

TEST(SupervisorEpisode, MalformedPlusValid) {
  const auto c = make_case("G", {{kModelOrganism}});
  ScriptedSupervisorPolicy policy("<tool_call>oops</tool_call>" +
                                      render_tool_block(call_for(c, EvidenceCategory::ModelSystem, 0)),
                                  "CLASSIFICATION: Moderate");
  const auto t = run_supervisor_episode(policy, c, ObservationMode::GroundTruth);
  EXPECT_EQ(t.calls.size(), 1u);
  EXPECT_EQ(t.n_err, 1);
}

TEST(SupervisorEpisode, SecondRoundBlocksCountedNotExecuted) {
  const auto c = make_case("G", {{kModelOrganism}});
  CountingBackend backend;
  ScriptedSupervisorPolicy policy(render_tool_block(call_for(c, EvidenceCategory::ModelSystem, 0)),
                                  render_tool_block(call_for(c, EvidenceCategory::Rescue, 0)) +
                                      "\nCLASSIFICATION: Strong");
  const auto t = run_supervisor_episode(policy, c, ObservationMode::Live, &backend);
  EXPECT_EQ(backend.count.load(), 1);
  EXPECT_EQ(t.calls.size(), 1u);
  EXPECT_EQ(t.n_err, 1);
  EXPECT_EQ(t.predicted_class, ValidityClass::Strong);
}

TEST(SupervisorEpisode, ParseFailureRecorded) {
  const auto c = make_case("G", {{}});
  ScriptedSupervisorPolicy policy("", "I think it is pretty strong");
  const auto t = run_supervisor_episode(policy, c, ObservationMode::GroundTruth);
  EXPECT_FALSE(t.predicted_class.has_value());
}

TEST(SupervisorEpisode, AlignmentAndDeterminism) {
  const auto cases = generate_synthetic_corpus(CorpusConfig{.cases = 20}, 2);
  OracleBackend oracle;
  for (const auto& c : cases) {
    std::string turn;
    for (const auto& a : c.articles) {
      for (auto k : kAllCategories) turn += render_tool_block(ToolCall{k, a.pmid, a.pmcid, c.gene, c.disease});
    }
    ScriptedSupervisorPolicy policy(turn, "CLASSIFICATION: Moderate");
    const auto t1 = run_supervisor_episode(policy, c, ObservationMode::Live, &oracle);
    const auto t2 = run_supervisor_episode(policy, c, ObservationMode::Live, &oracle);
    EXPECT_EQ(t1, t2);
    ASSERT_EQ(t1.observations.size(), t1.calls.size());
    for (std::size_t i = 0; i < t1.calls.size(); ++i) {
      EXPECT_EQ(t1.observations[i].category, t1.calls[i].category);
      EXPECT_EQ(t1.observations[i].pmid, t1.calls[i].pmid);
    }
  }
}

TEST(SupervisorEpisode, LiveModeNeedsBackend) {
  const auto c = make_case("G", {{}});
  ScriptedSupervisorPolicy policy("", "CLASSIFICATION: Limited");
  EXPECT_THROW(run_supervisor_episode(policy, c, ObservationMode::Live, nullptr), std::invalid_argument);
}

TEST(SingleAgentJson, AttestedOutput) {
  const auto a = parse_single_agent_json(
      R"({"classification":"Definitive","evidence":[{"type":"Model Systems Non-human model organism","pmid":"27448281"}]})");
  EXPECT_EQ(a.predicted_class, ValidityClass::Definitive);
  EXPECT_EQ(a.evidence, (EvidenceProfile{{"27448281", kModelOrganism}}));
  EXPECT_EQ(a.n_err, 0);
}

TEST(SingleAgentJson, EmptyEvidence) {
  const auto a = parse_single_agent_json(R"({"classification":"Definitive","evidence":[]})");
  EXPECT_EQ(a.predicted_class, ValidityClass::Definitive);
  EXPECT_TRUE(a.evidence.empty());
  EXPECT_EQ(a.n_err, 0);
}

TEST(SingleAgentJson, NonCatalogEntryDropped) {
  const auto a = parse_single_agent_json(
      R"({"classification":"Strong","evidence":[{"type":"Telepathy","pmid":"1"},{"type":"Rescue Human","pmid":"1"}]})");
  EXPECT_EQ(a.n_err, 1);
  EXPECT_EQ(a.evidence.size(), 1u);
}

TEST(SingleAgentJson, LastQualifyingObjectWins) {
  const auto a = parse_single_agent_json(
      "draft {\"classification\":\"Limited\",\"evidence\":[]} then {\"note\": {\"x\": 1}}\n"
      "final {\"classification\":\"Strong\",\"evidence\":[{\"type\":\"Expression A\",\"pmid\":\"7\"}]} done");
  EXPECT_EQ(a.predicted_class, ValidityClass::Strong);
  EXPECT_EQ(a.evidence.size(), 1u);
}

TEST(SingleAgentJson, InvalidJson) {
  const auto a = parse_single_agent_json("{\"classification\": \"Definitive\", \"evidence\": [");
  EXPECT_FALSE(a.predicted_class.has_value());
  EXPECT_TRUE(a.evidence.empty());
  EXPECT_EQ(a.n_err, 1);
}

TEST(SingleAgentEpisode, FullTextThenAnswer) {
  const auto cases = curated_cases();
  auto c = case_for(cases, "POLR1D");
  c.articles[0].full_text = "full text body";
  ScriptedSingleAgentPolicy policy(slurp(fixture_path("traces/polr1d_single_reasoning.txt")) +
                                       render_full_text_block("PMC4957770") + render_full_text_block("PMC0000000"),
                                   slurp(fixture_path("traces/polr1d_single_answer.txt")));
  const auto t = run_single_agent_episode(policy, c);
  EXPECT_EQ(t.fulltext_calls, (std::vector<std::string>{"PMC4957770", "PMC0000000"}));
  EXPECT_EQ(t.retrieved, (std::vector<std::string>{"PMC4957770"}));
  EXPECT_EQ(t.fine_evidence, (EvidenceProfile{{"27448281", kModelOrganism}}));
  EXPECT_EQ(t.predicted_class, ValidityClass::Definitive);
  EXPECT_EQ(t.n_err(), 0);
}

TEST(SingleAgentEpisode, DirectAnswer) {
  const auto cases = curated_cases();
  ScriptedSingleAgentPolicy policy("", slurp(fixture_path("traces/ocrl_single_answer.txt")));
  const auto t = run_single_agent_episode(policy, case_for(cases, "OCRL"));
  EXPECT_TRUE(t.fulltext_calls.empty());
  EXPECT_EQ(t.predicted_class, ValidityClass::Definitive);
}

TEST(SingleAgentEpisode, InvalidFinalJson) {
  ScriptedSingleAgentPolicy policy("", "{ not json");
  const auto t = run_single_agent_episode(policy, make_case("G", {{}}));
  EXPECT_TRUE(t.fine_evidence.empty());
  EXPECT_EQ(t.n_err(), 1);
  EXPECT_FALSE(t.predicted_class.has_value());
}

TEST(TrajectoryLog, FixtureLoadsFourTraces) {
  const auto log = gdvrl::testing::curated_trajectories();
  ASSERT_EQ(log.size(), 4u);
  EXPECT_TRUE(std::holds_alternative<SingleAgentTrajectory>(log[0]));
  EXPECT_TRUE(std::holds_alternative<SupervisorTrajectory>(log[1]));
  for (const auto& t : log) {
    const auto cls = std::visit([](const auto& v) { return v.predicted_class; }, t);
    EXPECT_EQ(cls, ValidityClass::Definitive);
  }
}

TEST(TrajectoryLog, JsonRoundTrip) {
  for (const auto& t : gdvrl::testing::curated_trajectories()) {
    EXPECT_EQ(trajectory_from_json(to_json(t)), t);
  }
  const auto c = make_case("G", {{kModelOrganism}});
  ScriptedSupervisorPolicy policy("<tool_call>x</tool_call>", "no label");
  const Trajectory t = run_supervisor_episode(policy, c, ObservationMode::GroundTruth);
  const auto j = to_json(t);
  EXPECT_TRUE(j["predicted_class"].is_null());
  EXPECT_EQ(trajectory_from_json(j), t);
}

TEST(TrajectoryLog, RejectsMisalignedObservations) {
  auto j = to_json(gdvrl::testing::curated_trajectories()[3]);
  j["observations"].erase(1);
  EXPECT_THROW(trajectory_from_json(j), MalformedTrajectory);
  auto k = to_json(gdvrl::testing::curated_trajectories()[3]);
  std::swap(k["observations"][0], k["observations"][1]);
  EXPECT_THROW(trajectory_from_json(k), MalformedTrajectory);
  EXPECT_THROW(trajectory_from_json(json{{"kind", "other"}, {"gene", "g"}, {"disease", "d"}, {"panel", "p"}}),
               MalformedTrajectory);
}

TEST(TrajectoryLog, LineNumbersInErrors) {
  std::istringstream in(slurp(fixture_path("curated_trajectories.jsonl")) + "{broken\n");
  try {
    load_trajectories(in);
    FAIL() << "expected MalformedTrajectory";
  } catch (const MalformedTrajectory& e) {
    EXPECT_NE(std::string(e.what()).find("line 5"), std::string::npos);
  }
}
