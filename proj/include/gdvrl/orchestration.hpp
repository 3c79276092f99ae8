#pragma once

// Episode runners for the supervisor (plan -> one parallel tool batch ->
// observations -> synthesis) and the single-agent baseline (optional
// get_full_text round -> structured JSON answer), together with the
// tool-block and final-answer parsers and the trajectory log format.

#include <future>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include <nlohmann/json.hpp>

#include "gdvrl/backends.hpp"
#include "gdvrl/case_store.hpp"
#include "gdvrl/evidence.hpp"
#include "gdvrl/tool_call.hpp"

namespace gdvrl {

/// A trajectory record that cannot be decoded.
class MalformedTrajectory : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline constexpr std::string_view kToolOpen = "<tool_call>";
inline constexpr std::string_view kToolClose = "</tool_call>";
inline constexpr std::string_view kFullTextTool = "get_full_text";

// ---------------------------------------------------------------------------
// Context and tool blocks
// ---------------------------------------------------------------------------

inline std::string render_context(const CaseRecord& c) {
  std::string out = "Gene: " + c.gene + "\nDisease: " + c.disease + "\n";
  for (const auto& a : c.articles) {
    out += "\nPMID: " + a.pmid + ", PMCID: " + a.pmcid + "\n";
    out += a.abstract_text;
    out += "\n";
  }
  return out;
}

struct ToolBlock {
  std::size_t begin = 0;  ///< offset of the opening tag
  std::size_t end = 0;    ///< one past the closing tag (or the cut point when unclosed)
  std::optional<std::string_view> content;  ///< nullopt when the block is unclosed
};

/// Splits text into `<tool_call>` blocks. An opening tag followed by another
/// opening tag (or end of text) before any closing tag is an unclosed block.
/// Stray closing tags are ignored.
inline std::vector<ToolBlock> scan_tool_blocks(std::string_view text) {
  std::vector<ToolBlock> blocks;
  std::size_t pos = text.find(kToolOpen);
  while (pos != std::string_view::npos) {
    const auto body = pos + kToolOpen.size();
    const auto close = text.find(kToolClose, body);
    const auto next_open = text.find(kToolOpen, body);
    if (close == std::string_view::npos || (next_open != std::string_view::npos && next_open < close)) {
      const auto cut = next_open == std::string_view::npos ? text.size() : next_open;
      blocks.push_back({pos, cut, std::nullopt});
      pos = next_open;
      continue;
    }
    blocks.push_back({pos, close + kToolClose.size(), text.substr(body, close - body)});
    pos = text.find(kToolOpen, close + kToolClose.size());
  }
  return blocks;
}

/// Text with all tool blocks removed.
inline std::string strip_tool_blocks(std::string_view text) {
  std::string out;
  std::size_t cursor = 0;
  for (const auto& b : scan_tool_blocks(text)) {
    out.append(text.substr(cursor, b.begin - cursor));
    cursor = b.end;
  }
  out.append(text.substr(std::min(cursor, text.size())));
  return out;
}

struct ParsedToolCalls {
  std::vector<ToolCall> calls;  ///< well-formed, first occurrence order, duplicates removed
  int n_err = 0;                ///< malformed blocks
};

/// Never throws. A block is malformed when it is unclosed, is not a JSON
/// object, names an unknown tool, or lacks one of pmid/pmcid/gene/disease.
inline ParsedToolCalls parse_tool_blocks(std::string_view text) {
  ParsedToolCalls out;
  ToolCallSet seen;
  for (const auto& block : scan_tool_blocks(text)) {
    if (!block.content) {
      ++out.n_err;
      continue;
    }
    const auto j = json::parse(*block.content, nullptr, /*allow_exceptions=*/false);
    auto call = j.is_discarded() ? std::nullopt : tool_call_from_json(j);
    if (!call) {
      ++out.n_err;
      continue;
    }
    if (seen.insert(*call).second) out.calls.push_back(std::move(*call));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Observation step
// ---------------------------------------------------------------------------

/// One finding per call, index-aligned. Identical calls are evaluated once.
/// Calls run concurrently when the backend allows it.
inline std::vector<EvidenceFinding> execute_batch(const std::vector<ToolCall>& calls, const AgentBackend& backend,
                                                  const CaseRecord& c) {
  std::map<ToolCall, std::size_t> first_index;
  std::vector<std::size_t> unique;
  for (std::size_t i = 0; i < calls.size(); ++i) {
    if (first_index.emplace(calls[i], unique.size()).second) unique.push_back(i);
  }

  std::vector<EvidenceFinding> results(unique.size());
  if (backend.concurrency_safe() && unique.size() > 1) {
    std::vector<std::future<EvidenceFinding>> pending;
    pending.reserve(unique.size());
    for (auto i : unique) {
      pending.push_back(std::async(std::launch::async, [&backend, &c, &call = calls[i]] {
        return backend.evaluate(call, c);
      }));
    }
    // collect every future before rethrowing so no task outlives the inputs
    std::exception_ptr failure;
    for (std::size_t u = 0; u < pending.size(); ++u) {
      try {
        results[u] = pending[u].get();
      } catch (...) {
        if (!failure) failure = std::current_exception();
      }
    }
    if (failure) std::rethrow_exception(failure);
  } else {
    for (std::size_t u = 0; u < unique.size(); ++u) results[u] = backend.evaluate(calls[unique[u]], c);
  }

  std::vector<EvidenceFinding> out;
  out.reserve(calls.size());
  for (const auto& call : calls) out.push_back(results[first_index.at(call)]);
  return out;
}

/// Training-time observations built from gold annotations instead of live
/// sub-agent output.
inline std::vector<EvidenceFinding> inject_ground_truth(const std::vector<ToolCall>& calls, const CaseRecord& c) {
  std::vector<EvidenceFinding> out;
  out.reserve(calls.size());
  for (const auto& call : calls) out.push_back(oracle_evaluate(call, c));
  return out;
}

// ---------------------------------------------------------------------------
// Trajectories
// ---------------------------------------------------------------------------

struct SupervisorTrajectory {
  CaseKey case_key;
  std::string plan_text;
  std::vector<ToolCall> calls;
  int n_err = 0;
  std::vector<EvidenceFinding> observations;
  std::string synth_text;
  Prediction predicted_class;

  ToolCallSet call_set() const { return {calls.begin(), calls.end()}; }

  /// Union of observed (pmid, subtype) pairs.
  EvidenceProfile predicted_profile() const {
    EvidenceProfile p;
    for (const auto& o : observations) {
      for (const auto& s : o.subtypes) p.insert({o.pmid, s});
    }
    return p;
  }

  friend bool operator==(const SupervisorTrajectory&, const SupervisorTrajectory&) = default;
};

struct SingleAgentTrajectory {
  CaseKey case_key;
  std::vector<std::string> fulltext_calls;  ///< requested pmcids, deduplicated, request order
  std::vector<std::string> retrieved;       ///< pmcids that resolved to a full text
  std::string reason_text;
  Prediction predicted_class;
  EvidenceProfile fine_evidence;
  int n_err_tool = 0;    ///< malformed or misplaced tool blocks
  int n_err_output = 0;  ///< unparseable final object plus dropped evidence entries

  int n_err() const noexcept { return n_err_tool + n_err_output; }

  friend bool operator==(const SingleAgentTrajectory&, const SingleAgentTrajectory&) = default;
};

using Trajectory = std::variant<SupervisorTrajectory, SingleAgentTrajectory>;

inline const CaseKey& case_key_of(const Trajectory& t) {
  return std::visit([](const auto& v) -> const CaseKey& { return v.case_key; }, t);
}

// ---------------------------------------------------------------------------
// Policies
// ---------------------------------------------------------------------------

class SupervisorPolicy {
 public:
  virtual ~SupervisorPolicy() = default;
  /// First turn: planning text plus `<tool_call>` blocks.
  virtual std::string tool_turn(const CaseRecord& c, const std::string& context) = 0;
  /// Second turn, after the observations; ends with "CLASSIFICATION: <label>".
  virtual std::string synthesis_turn(const CaseRecord& c, const std::string& context,
                                     const std::vector<ToolCall>& calls,
                                     const std::vector<EvidenceFinding>& observations) = 0;
};

class SingleAgentPolicy {
 public:
  virtual ~SingleAgentPolicy() = default;
  /// First turn: reasoning plus optional get_full_text blocks.
  virtual std::string tool_turn(const CaseRecord& c, const std::string& context) = 0;
  /// Final turn containing the JSON answer object.
  virtual std::string final_turn(const CaseRecord& c, const std::string& context,
                                 const std::vector<std::pair<std::string, std::optional<std::string>>>& full_texts) = 0;
};

/// Replays fixed turn texts.
class ScriptedSupervisorPolicy final : public SupervisorPolicy {
 public:
  ScriptedSupervisorPolicy(std::string tool_text, std::string synth_text)
      : tool_text_(std::move(tool_text)), synth_text_(std::move(synth_text)) {}
  std::string tool_turn(const CaseRecord&, const std::string&) override { return tool_text_; }
  std::string synthesis_turn(const CaseRecord&, const std::string&, const std::vector<ToolCall>&,
                             const std::vector<EvidenceFinding>&) override {
    return synth_text_;
  }

 private:
  std::string tool_text_;
  std::string synth_text_;
};

class ScriptedSingleAgentPolicy final : public SingleAgentPolicy {
 public:
  ScriptedSingleAgentPolicy(std::string tool_text, std::string final_text)
      : tool_text_(std::move(tool_text)), final_text_(std::move(final_text)) {}
  std::string tool_turn(const CaseRecord&, const std::string&) override { return tool_text_; }
  std::string final_turn(const CaseRecord&, const std::string&,
                         const std::vector<std::pair<std::string, std::optional<std::string>>>&) override {
    return final_text_;
  }

 private:
  std::string tool_text_;
  std::string final_text_;
};

enum class ObservationMode { Live, GroundTruth };

/// Exactly one tool round. Tool blocks in the synthesis turn are not executed
/// and each counts as a malformed block.
inline SupervisorTrajectory run_supervisor_episode(SupervisorPolicy& policy, const CaseRecord& c, ObservationMode mode,
                                                   const AgentBackend* backend = nullptr) {
  SupervisorTrajectory t;
  t.case_key = c.key();
  const auto context = render_context(c);

  const auto tool_text = policy.tool_turn(c, context);
  auto parsed = parse_tool_blocks(tool_text);
  t.plan_text = strip_tool_blocks(tool_text);
  t.calls = std::move(parsed.calls);
  t.n_err = parsed.n_err;

  if (mode == ObservationMode::GroundTruth) {
    t.observations = inject_ground_truth(t.calls, c);
  } else {
    if (backend == nullptr) throw std::invalid_argument("live episode requires a backend");
    t.observations = execute_batch(t.calls, *backend, c);
  }

  t.synth_text = policy.synthesis_turn(c, context, t.calls, t.observations);
  t.n_err += static_cast<int>(scan_tool_blocks(t.synth_text).size());
  t.predicted_class = try_parse_validity_label(t.synth_text);
  return t;
}

struct SingleAgentAnswer {
  Prediction predicted_class;
  EvidenceProfile evidence;
  int n_err = 0;
  std::size_t object_begin = std::string::npos;  ///< offset of the answer object, npos if none
};

namespace detail {

/// Offset one past the brace matching text[open], honouring JSON strings.
inline std::optional<std::size_t> match_brace(std::string_view text, std::size_t open) {
  int depth = 0;
  bool in_string = false;
  for (std::size_t i = open; i < text.size(); ++i) {
    const char ch = text[i];
    if (in_string) {
      if (ch == '\\') ++i;
      else if (ch == '"') in_string = false;
      continue;
    }
    if (ch == '"') in_string = true;
    else if (ch == '{') ++depth;
    else if (ch == '}' && --depth == 0) return i + 1;
  }
  return std::nullopt;
}

}  // namespace detail

/// Reads the last JSON object carrying both `classification` and `evidence`.
/// Each evidence entry needs a catalog `type` and a `pmid`; bad entries are
/// dropped and counted. A missing object counts as one error.
inline SingleAgentAnswer parse_single_agent_json(std::string_view text) {
  SingleAgentAnswer out;
  std::size_t pos = text.rfind('{');
  while (pos != std::string_view::npos) {
    if (const auto end = detail::match_brace(text, pos)) {
      const auto j = json::parse(text.substr(pos, *end - pos), nullptr, /*allow_exceptions=*/false);
      if (j.is_object() && j.contains("classification") && j.contains("evidence")) {
        out.object_begin = pos;
        const auto& cls = j["classification"];
        if (cls.is_string()) out.predicted_class = validity_from_label(cls.get<std::string>());
        const auto& ev = j["evidence"];
        if (!ev.is_array()) {
          ++out.n_err;
          return out;
        }
        for (const auto& item : ev) {
          if (!item.is_object()) {
            ++out.n_err;
            continue;
          }
          const auto type = item.find("type");
          const auto pmid = detail::string_arg(item, "pmid");
          std::optional<EvidenceSubtype> subtype;
          if (type != item.end() && type->is_string()) subtype = parse_qualified_subtype(type->get<std::string>());
          if (!subtype || !pmid) {
            ++out.n_err;
            continue;
          }
          out.evidence.insert({*pmid, *subtype});
        }
        return out;
      }
    }
    if (pos == 0) break;
    pos = text.rfind('{', pos - 1);
  }
  out.n_err = 1;
  return out;
}

namespace detail {

struct ParsedFullTextCalls {
  std::vector<std::string> pmcids;
  int n_err = 0;
};

inline ParsedFullTextCalls parse_full_text_blocks(std::string_view text) {
  ParsedFullTextCalls out;
  for (const auto& block : scan_tool_blocks(text)) {
    if (!block.content) {
      ++out.n_err;
      continue;
    }
    const auto j = json::parse(*block.content, nullptr, /*allow_exceptions=*/false);
    const bool named = j.is_object() && j.contains("name") && j["name"] == kFullTextTool;
    const auto args = named ? j.find("args") : j.end();
    const auto pmcid = named && args != j.end() && args->is_object() ? string_arg(*args, "pmcid") : std::nullopt;
    if (!pmcid) {
      ++out.n_err;
      continue;
    }
    if (std::find(out.pmcids.begin(), out.pmcids.end(), *pmcid) == out.pmcids.end()) out.pmcids.push_back(*pmcid);
  }
  return out;
}

}  // namespace detail

inline std::string render_full_text_block(std::string_view pmcid) {
  return "<tool_call>{\"name\": \"get_full_text\", \"args\": {\"pmcid\": " + json(std::string(pmcid)).dump() +
         "}}</tool_call>";
}

inline SingleAgentTrajectory run_single_agent_episode(SingleAgentPolicy& policy, const CaseRecord& c) {
  SingleAgentTrajectory t;
  t.case_key = c.key();
  const auto context = render_context(c);

  const auto tool_text = policy.tool_turn(c, context);
  auto requests = detail::parse_full_text_blocks(tool_text);
  t.n_err_tool = requests.n_err;
  t.fulltext_calls = requests.pmcids;

  std::vector<std::pair<std::string, std::optional<std::string>>> full_texts;
  for (const auto& pmcid : t.fulltext_calls) {
    auto text = get_full_text(pmcid, c);
    if (text) t.retrieved.push_back(pmcid);
    full_texts.emplace_back(pmcid, std::move(text));
  }

  const auto final_text = policy.final_turn(c, context, full_texts);
  t.n_err_tool += static_cast<int>(scan_tool_blocks(final_text).size());
  auto answer = parse_single_agent_json(final_text);
  t.predicted_class = answer.predicted_class;
  t.fine_evidence = std::move(answer.evidence);
  t.n_err_output = answer.n_err;
  t.reason_text = strip_tool_blocks(
      std::string_view(final_text).substr(0, std::min(answer.object_begin, final_text.size())));
  return t;
}

// ---------------------------------------------------------------------------
// Trajectory log (JSONL)
// ---------------------------------------------------------------------------

inline json prediction_to_json(const Prediction& p) { return p ? json(display_name(*p)) : json(nullptr); }

inline json to_json(const SupervisorTrajectory& t) {
  json calls = json::array();
  for (const auto& c : t.calls) calls.push_back(to_json(c));
  json obs = json::array();
  for (const auto& o : t.observations) obs.push_back(to_json(o));
  json j = json::object();
  j["kind"] = "supervisor";
  j["gene"] = t.case_key.gene;
  j["disease"] = t.case_key.disease;
  j["panel"] = t.case_key.panel;
  j["plan_text"] = t.plan_text;
  j["calls"] = std::move(calls);
  j["n_err"] = t.n_err;
  j["observations"] = std::move(obs);
  j["synth_text"] = t.synth_text;
  j["predicted_class"] = prediction_to_json(t.predicted_class);
  return j;
}

inline json to_json(const SingleAgentTrajectory& t) {
  json evidence = json::array();
  for (const auto& e : t.fine_evidence) evidence.push_back({{"pmid", e.pmid}, {"type", e.subtype.qualified()}});
  json j = json::object();
  j["kind"] = "single";
  j["gene"] = t.case_key.gene;
  j["disease"] = t.case_key.disease;
  j["panel"] = t.case_key.panel;
  j["fulltext_calls"] = t.fulltext_calls;
  j["retrieved"] = t.retrieved;
  j["reason_text"] = t.reason_text;
  j["predicted_class"] = prediction_to_json(t.predicted_class);
  j["fine_evidence"] = std::move(evidence);
  j["n_err_tool"] = t.n_err_tool;
  j["n_err_output"] = t.n_err_output;
  return j;
}

inline json to_json(const Trajectory& t) {
  return std::visit([](const auto& v) { return to_json(v); }, t);
}

namespace detail {

inline std::string traj_string(const json& j, const char* key, bool required) {
  const auto it = j.find(key);
  if (it == j.end() || it->is_null()) {
    if (required) throw MalformedTrajectory(std::string("trajectory lacks '") + key + "'");
    return {};
  }
  if (!it->is_string()) throw MalformedTrajectory(std::string("'") + key + "' must be a string");
  return it->get<std::string>();
}

inline int traj_count(const json& j, const char* key) {
  const auto it = j.find(key);
  if (it == j.end()) return 0;
  if (!it->is_number_integer() || it->get<long long>() < 0) {
    throw MalformedTrajectory(std::string("'") + key + "' must be a nonnegative integer");
  }
  return it->get<int>();
}

inline Prediction traj_prediction(const json& j) {
  const auto it = j.find("predicted_class");
  if (it == j.end() || !it->is_string()) return std::nullopt;
  return try_parse_validity_label(it->get<std::string>());
}

inline std::vector<std::string> traj_string_list(const json& j, const char* key) {
  std::vector<std::string> out;
  const auto it = j.find(key);
  if (it == j.end() || it->is_null()) return out;
  if (!it->is_array()) throw MalformedTrajectory(std::string("'") + key + "' must be a list");
  for (const auto& v : *it) {
    if (!v.is_string()) throw MalformedTrajectory(std::string("'") + key + "' entries must be strings");
    out.push_back(v.get<std::string>());
  }
  return out;
}

}  // namespace detail

/// Decodes one log record. Observation subtypes outside the catalog are
/// dropped and reported in `warnings` when given.
inline Trajectory trajectory_from_json(const json& j, std::vector<std::string>* warnings = nullptr) {
  if (!j.is_object()) throw MalformedTrajectory("trajectory must be a JSON object");
  const auto kind = detail::traj_string(j, "kind", true);
  CaseKey key{detail::traj_string(j, "gene", true), detail::traj_string(j, "disease", true),
              detail::traj_string(j, "panel", true)};

  if (kind == "supervisor") {
    SupervisorTrajectory t;
    t.case_key = std::move(key);
    t.plan_text = detail::traj_string(j, "plan_text", false);
    t.synth_text = detail::traj_string(j, "synth_text", false);
    t.n_err = detail::traj_count(j, "n_err");
    t.predicted_class = detail::traj_prediction(j);
    const auto calls = j.find("calls");
    if (calls != j.end() && !calls->is_array()) throw MalformedTrajectory("'calls' must be a list");
    if (calls != j.end()) {
      for (const auto& c : *calls) {
        auto call = tool_call_from_json(c);
        if (!call) throw MalformedTrajectory("invalid call record: " + c.dump());
        t.calls.push_back(std::move(*call));
      }
    }
    const auto obs = j.find("observations");
    if (obs != j.end() && !obs->is_array()) throw MalformedTrajectory("'observations' must be a list");
    if (obs != j.end()) {
      for (const auto& o : *obs) {
        try {
          auto parsed = finding_from_json(o);
          if (warnings != nullptr) {
            for (const auto& d : parsed.dropped) warnings->push_back("dropped non-catalog subtype '" + d + "'");
          }
          t.observations.push_back(std::move(parsed.finding));
        } catch (const MalformedResponse& e) {
          throw MalformedTrajectory(std::string("invalid observation: ") + e.what());
        }
      }
    }
    if (t.observations.size() != t.calls.size()) {
      throw MalformedTrajectory("observations must align one-to-one with calls");
    }
    for (std::size_t i = 0; i < t.calls.size(); ++i) {
      if (t.observations[i].category != t.calls[i].category) {
        throw MalformedTrajectory("observation " + std::to_string(i) + " does not match its call's category");
      }
    }
    return t;
  }

  if (kind == "single") {
    SingleAgentTrajectory t;
    t.case_key = std::move(key);
    t.fulltext_calls = detail::traj_string_list(j, "fulltext_calls");
    t.retrieved = detail::traj_string_list(j, "retrieved");
    t.reason_text = detail::traj_string(j, "reason_text", false);
    t.predicted_class = detail::traj_prediction(j);
    t.n_err_tool = detail::traj_count(j, "n_err_tool");
    t.n_err_output = detail::traj_count(j, "n_err_output");
    const auto ev = j.find("fine_evidence");
    if (ev != j.end() && !ev->is_array()) throw MalformedTrajectory("'fine_evidence' must be a list");
    if (ev != j.end()) {
      for (const auto& item : *ev) {
        const auto pmid = item.is_object() ? detail::string_arg(item, "pmid") : std::nullopt;
        const auto type = item.is_object() ? item.find("type") : item.end();
        std::optional<EvidenceSubtype> subtype;
        if (pmid && type != item.end() && type->is_string()) subtype = parse_qualified_subtype(type->get<std::string>());
        if (!subtype) throw MalformedTrajectory("invalid fine_evidence entry: " + item.dump());
        t.fine_evidence.insert({*pmid, *subtype});
      }
    }
    return t;
  }

  throw MalformedTrajectory("unknown trajectory kind '" + kind + "'");
}

inline std::vector<Trajectory> load_trajectories(std::istream& in) {
  std::vector<Trajectory> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (detail::trim(line).empty()) continue;
    const auto j = json::parse(line, nullptr, /*allow_exceptions=*/false);
    if (j.is_discarded()) throw MalformedTrajectory("line " + std::to_string(lineno) + ": invalid JSON");
    try {
      out.push_back(trajectory_from_json(j));
    } catch (const MalformedTrajectory& e) {
      throw MalformedTrajectory("line " + std::to_string(lineno) + ": " + e.what());
    }
  }
  return out;
}

}  // namespace gdvrl
