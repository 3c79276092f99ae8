#pragma once

// HTTP sub-agent backend. The serving side owns prompt text; requests carry
// the role (tool) name, the call arguments and the document.

#include <chrono>
#include <functional>
#include <iostream>
#include <memory>
#include <semaphore>
#include <string>

#include <httplib.h>
#include <nlohmann/json.hpp>

#include "gdvrl/backends.hpp"

namespace gdvrl {

struct RemoteConfig {
  std::chrono::milliseconds timeout{30000};
  int retries = 2;
  int max_in_flight = 8;
  /// Receives sanitization warnings (dropped subtypes).
  std::function<void(const std::string&)> warn = [](const std::string& msg) {
    std::cerr << "warning: " << msg << '\n';
  };
};

inline json remote_request_body(const ToolCall& call, const ArticleRecord& article) {
  json j = json::object();
  j["category"] = category_name(call.category);
  j["role"] = canonical_tool_name(call.category);
  j["gene"] = call.gene;
  j["disease"] = call.disease;
  j["pmid"] = call.pmid;
  j["pmcid"] = call.pmcid;
  j["document"] = article.full_text ? *article.full_text : article.abstract_text;
  return j;
}

/// Turns a response body into a finding for `call`. The response must be an
/// observation object of the call's category; non-catalog subtypes are dropped
/// and reported through `warn`.
inline EvidenceFinding sanitize_remote_response(const ToolCall& call, std::string_view body,
                                                const std::function<void(const std::string&)>& warn) {
  const auto j = json::parse(body, nullptr, /*allow_exceptions=*/false);
  if (j.is_discarded()) throw MalformedResponse("sub-agent response is not valid JSON");
  auto parsed = finding_from_json(j);
  if (parsed.finding.category != call.category) {
    throw MalformedResponse("sub-agent answered for category " + std::string(category_name(parsed.finding.category)) +
                            ", expected " + std::string(category_name(call.category)));
  }
  for (const auto& d : parsed.dropped) {
    if (warn) warn("dropped non-catalog subtype '" + d + "' from " + std::string(category_name(call.category)));
  }
  parsed.finding.pmid = call.pmid;
  return std::move(parsed.finding);
}

class RemoteBackend final : public AgentBackend {
 public:
  /// `endpoint` is scheme://host:port, e.g. "http://127.0.0.1:8080".
  explicit RemoteBackend(std::string endpoint, RemoteConfig cfg = {})
      : endpoint_(std::move(endpoint)),
        cfg_(std::move(cfg)),
        slots_(std::make_unique<std::counting_semaphore<>>(std::max(1, cfg_.max_in_flight))) {}

  EvidenceFinding evaluate(const ToolCall& call, const CaseRecord& c) const override {
    const auto* article = detail::resolve_document(call, c);
    if (article == nullptr) {
      return detail::empty_finding(call, "Document PMID " + call.pmid + " is not part of this case.");
    }
    return remote_evaluate(call, *article);
  }

  EvidenceFinding remote_evaluate(const ToolCall& call, const ArticleRecord& article) const {
    const auto body = remote_request_body(call, article).dump();
    slots_->acquire();
    struct Release {
      std::counting_semaphore<>* s;
      ~Release() { s->release(); }
    } release{slots_.get()};

    std::string last_error;
    for (int attempt = 0; attempt <= cfg_.retries; ++attempt) {
      httplib::Client client(endpoint_);
      client.set_tcp_nodelay(true);
      const auto secs = std::chrono::duration_cast<std::chrono::seconds>(cfg_.timeout);
      const auto usecs = std::chrono::duration_cast<std::chrono::microseconds>(cfg_.timeout - secs);
      client.set_connection_timeout(static_cast<time_t>(secs.count()), static_cast<time_t>(usecs.count()));
      client.set_read_timeout(static_cast<time_t>(secs.count()), static_cast<time_t>(usecs.count()));
      client.set_write_timeout(static_cast<time_t>(secs.count()), static_cast<time_t>(usecs.count()));
      auto res = client.Post("/v1/subagent/evaluate", body, "application/json");
      if (!res) {
        last_error = httplib::to_string(res.error());
        continue;
      }
      if (res->status >= 500) {
        last_error = "HTTP " + std::to_string(res->status);
        continue;
      }
      if (res->status != 200) throw MalformedResponse("sub-agent returned HTTP " + std::to_string(res->status));
      return sanitize_remote_response(call, res->body, cfg_.warn);
    }
    throw BackendUnavailable("sub-agent endpoint " + endpoint_ + " unavailable: " + last_error);
  }

 private:
  std::string endpoint_;
  RemoteConfig cfg_;
  std::unique_ptr<std::counting_semaphore<>> slots_;
};

}  // namespace gdvrl
