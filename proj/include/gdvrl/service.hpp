#pragma once

// Trajectory grading shared by the offline `grade` command and the HTTP
// service, plus run manifests.

#include <cstdint>
#include <fstream>
#include <iomanip>
#include <iterator>
#include <map>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

#include <httplib.h>
#include <nlohmann/json.hpp>

#include "gdvrl/case_store.hpp"
#include "gdvrl/errors.hpp"
#include "gdvrl/orchestration.hpp"
#include "gdvrl/random.hpp"
#include "gdvrl/reward.hpp"

namespace gdvrl {

inline constexpr std::string_view kArtifactVersion = "gdvrl-1.0.0";

/// Immutable corpus index that grades trajectories statelessly.
class Grader {
 public:
  Grader(std::vector<CaseRecord> cases, RewardScheme scheme, RewardConfig cfg = {})
      : cases_(std::move(cases)), scheme_(scheme), cfg_(cfg) {
    cfg_.validate();
    for (const auto& c : cases_) index_.emplace(c.key(), &c);
  }

  Grader(const Grader&) = delete;
  Grader& operator=(const Grader&) = delete;

  const CaseRecord* find(const CaseKey& key) const {
    const auto it = index_.find(key);
    return it == index_.end() ? nullptr : it->second;
  }

  /// Throws CaseMismatch for unknown case keys.
  RewardBreakdown grade(const Trajectory& t) const {
    const auto* c = find(case_key_of(t));
    if (c == nullptr) throw CaseMismatch({to_string(case_key_of(t))});
    return grade_trajectory(t, *c, scheme_, cfg_);
  }

  /// The serialized breakdown; both the offline and online paths emit this.
  std::string grade_line(const Trajectory& t) const { return to_json(grade(t)).dump(); }

  std::size_t size() const noexcept { return cases_.size(); }
  RewardScheme scheme() const noexcept { return scheme_; }

 private:
  std::vector<CaseRecord> cases_;
  std::map<CaseKey, const CaseRecord*> index_;
  RewardScheme scheme_;
  RewardConfig cfg_;
};

struct GradeResponse {
  int status = 200;
  std::string body;
};

/// Handles one POST /v1/grade body.
inline GradeResponse handle_grade_request(const Grader& grader, const std::string& body) {
  auto error = [](int status, const std::string& what) {
    return GradeResponse{status, json{{"error", what}}.dump()};
  };
  const auto j = json::parse(body, nullptr, /*allow_exceptions=*/false);
  if (j.is_discarded()) return error(400, "request body is not valid JSON");
  Trajectory t;
  try {
    t = trajectory_from_json(j);
  } catch (const MalformedTrajectory& e) {
    return error(400, e.what());
  }
  if (grader.find(case_key_of(t)) == nullptr) return error(404, "unknown case key: " + to_string(case_key_of(t)));
  return {200, grader.grade_line(t)};
}

inline json health_json(const Grader& grader) {
  return json{{"status", "ok"},
              {"cases", grader.size()},
              {"scheme", scheme_name(grader.scheme())},
              {"version", kArtifactVersion}};
}

/// Installs the grading routes on `server` and disables Nagle batching.
inline void install_routes(httplib::Server& server, const Grader& grader) {
  server.set_tcp_nodelay(true);
  server.Post("/v1/grade", [&grader](const httplib::Request& req, httplib::Response& res) {
    const auto out = handle_grade_request(grader, req.body);
    res.status = out.status;
    res.set_content(out.body, "application/json");
  });
  server.Get("/healthz", [&grader](const httplib::Request&, httplib::Response& res) {
    res.set_content(health_json(grader).dump(), "application/json");
  });
}

struct GradeFileResult {
  std::vector<std::string> lines;
  std::vector<std::string> unresolved;
};

/// Grades a trajectory JSONL stream in order. Unknown case keys are
/// collected rather than thrown so they can all be reported together.
inline GradeFileResult grade_stream(const Grader& grader, std::istream& in) {
  GradeFileResult out;
  for (const auto& t : load_trajectories(in)) {
    if (grader.find(case_key_of(t)) == nullptr) {
      out.unresolved.push_back(to_string(case_key_of(t)));
      continue;
    }
    out.lines.push_back(grader.grade_line(t));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Manifests
// ---------------------------------------------------------------------------

inline std::string hex64(std::uint64_t v) {
  std::ostringstream os;
  os << std::hex << std::setw(16) << std::setfill('0') << v;
  return os.str();
}

inline std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline std::string file_hash(const std::string& path) { return hex64(fnv1a(read_file(path))); }

struct RunManifest {
  std::string command;
  json config = json::object();
  std::map<std::string, std::string> inputs;   ///< path -> content hash
  std::map<std::string, std::string> outputs;  ///< path -> content hash
  std::uint64_t seed = 0;
  std::string output_dir;
};

inline json to_json(const RunManifest& m) {
  auto files = [](const std::map<std::string, std::string>& m) {
    json out = json::array();
    for (const auto& [path, hash] : m) out.push_back({{"path", path}, {"fnv1a64", hash}});
    return out;
  };
  return json{{"command", m.command},
              {"version", kArtifactVersion},
              {"seed", m.seed},
              {"config", m.config},
              {"inputs", files(m.inputs)},
              {"outputs", files(m.outputs)},
              {"output_dir", m.output_dir}};
}

}  // namespace gdvrl
