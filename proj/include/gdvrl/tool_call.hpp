#pragma once

// ToolCall and EvidenceFinding value types plus their wire encodings.

#include <set>
#include <string>
#include <tuple>
#include <vector>

#include <nlohmann/json.hpp>

#include "gdvrl/evidence.hpp"

namespace gdvrl {

using nlohmann::json;

/// Malformed observation or response payload.
class MalformedResponse : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A supervisor delegation: one expert agent applied to one document.
struct ToolCall {
  EvidenceCategory category{};
  std::string pmid;
  std::string pmcid;
  std::string gene;
  std::string disease;

  friend bool operator==(const ToolCall&, const ToolCall&) = default;
  friend auto operator<=>(const ToolCall&, const ToolCall&) = default;
};

using ToolCallSet = std::set<ToolCall>;

/// (document id, subtype) element of an evidence profile.
struct ProfileItem {
  std::string pmid;
  EvidenceSubtype subtype;

  friend bool operator==(const ProfileItem&, const ProfileItem&) = default;
  friend auto operator<=>(const ProfileItem& a, const ProfileItem& b) {
    return std::tie(a.pmid, a.subtype) <=> std::tie(b.pmid, b.subtype);
  }
};

using EvidenceProfile = std::set<ProfileItem>;

/// A sub-agent observation for one (category, article) pair.
/// Invariant: has_evidence() == !subtypes.empty(), all subtypes in category.
struct EvidenceFinding {
  EvidenceCategory category{};
  std::string pmid;
  std::set<EvidenceSubtype> subtypes;
  std::string explanation;

  bool has_evidence() const noexcept { return !subtypes.empty(); }

  friend bool operator==(const EvidenceFinding&, const EvidenceFinding&) = default;
};

/// Wire form of a call: {"name": ..., "args": {"pmid", "pmcid", "gene", "disease"}}.
inline json to_json(const ToolCall& c) {
  json args = json::object();
  args["pmid"] = c.pmid;
  args["pmcid"] = c.pmcid;
  args["gene"] = c.gene;
  args["disease"] = c.disease;
  json j = json::object();
  j["name"] = canonical_tool_name(c.category);
  j["args"] = std::move(args);
  return j;
}

/// Renders the bit-exact `<tool_call>` block for a call.
inline std::string render_tool_block(const ToolCall& c) {
  return "<tool_call>{\"name\": " + json(canonical_tool_name(c.category)).dump() +
         ", \"args\": {\"pmid\": " + json(c.pmid).dump() + ", \"pmcid\": " + json(c.pmcid).dump() +
         ", \"gene\": " + json(c.gene).dump() + ", \"disease\": " + json(c.disease).dump() +
         "}}</tool_call>";
}

namespace detail {

/// Reads a required identifier-like argument. Integers are accepted and
/// rendered in decimal; empty strings are rejected.
inline std::optional<std::string> string_arg(const json& args, const char* key) {
  const auto it = args.find(key);
  if (it == args.end()) return std::nullopt;
  if (it->is_string()) {
    auto s = it->get<std::string>();
    if (s.empty()) return std::nullopt;
    return s;
  }
  if (it->is_number_integer()) return std::to_string(it->get<long long>());
  return std::nullopt;
}

}  // namespace detail

/// Decodes a call object. Returns nullopt on any schema violation
/// (unknown name, missing or empty argument).
inline std::optional<ToolCall> tool_call_from_json(const json& j) {
  if (!j.is_object()) return std::nullopt;
  const auto name = j.find("name");
  const auto args = j.find("args");
  if (name == j.end() || !name->is_string() || args == j.end() || !args->is_object()) {
    return std::nullopt;
  }
  const auto category = try_category_from_tool_name(name->get<std::string>());
  if (!category) return std::nullopt;
  auto pmid = detail::string_arg(*args, "pmid");
  auto pmcid = detail::string_arg(*args, "pmcid");
  auto gene = detail::string_arg(*args, "gene");
  auto disease = detail::string_arg(*args, "disease");
  if (!pmid || !pmcid || !gene || !disease) return std::nullopt;
  return ToolCall{*category, std::move(*pmid), std::move(*pmcid), std::move(*gene), std::move(*disease)};
}

/// Observation JSON returned to the supervisor.
inline json to_json(const EvidenceFinding& f) {
  json subtypes = json::array();
  for (const auto& s : f.subtypes) subtypes.push_back(std::string(s.label()));
  json j = json::object();
  j["evidence_type"] = category_name(f.category);
  j["has_evidence"] = f.has_evidence();
  j["pmid"] = f.pmid;
  j["evidence_subtype"] = std::move(subtypes);
  j["explanation"] = f.explanation;
  return j;
}

struct SanitizedFinding {
  EvidenceFinding finding;
  std::vector<std::string> dropped;  ///< subtype strings that were not catalog members
};

/// Parses an observation object, normalizing subtype spellings and dropping
/// entries outside the category's catalog. A single-string
/// `evidence_subtype` is treated as a one-element list. A `has_evidence`
/// flag of false forces an empty subtype set.
inline SanitizedFinding finding_from_json(const json& j) {
  if (!j.is_object()) throw MalformedResponse("observation is not a JSON object");
  const auto type = j.find("evidence_type");
  if (type == j.end() || !type->is_string()) throw MalformedResponse("observation lacks evidence_type");
  const auto category = category_from_name(type->get<std::string>());
  if (!category) throw MalformedResponse("unknown evidence_type: " + type->get<std::string>());

  SanitizedFinding out;
  out.finding.category = *category;
  if (auto pmid = detail::string_arg(j, "pmid")) out.finding.pmid = *pmid;
  if (const auto e = j.find("explanation"); e != j.end() && e->is_string()) {
    out.finding.explanation = e->get<std::string>();
  }

  bool has_evidence = true;
  if (const auto h = j.find("has_evidence"); h != j.end()) {
    if (!h->is_boolean()) throw MalformedResponse("has_evidence is not a boolean");
    has_evidence = h->get<bool>();
  }

  std::vector<std::string> raw;
  if (const auto s = j.find("evidence_subtype"); s != j.end()) {
    if (s->is_string()) {
      raw.push_back(s->get<std::string>());
    } else if (s->is_array()) {
      for (const auto& v : *s) {
        if (v.is_string()) raw.push_back(v.get<std::string>());
        else out.dropped.push_back(v.dump());
      }
    } else if (!s->is_null()) {
      throw MalformedResponse("evidence_subtype must be a string or a list");
    }
  }
  for (auto& r : raw) {
    if (auto st = parse_subtype(*category, r)) out.finding.subtypes.insert(*st);
    else out.dropped.push_back(std::move(r));
  }
  if (!has_evidence) out.finding.subtypes.clear();
  return out;
}

}  // namespace gdvrl
