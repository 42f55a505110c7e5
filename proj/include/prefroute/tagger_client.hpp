#pragma once

#include <cstdint>
#include <string>

#include "prefroute/tagging.hpp"

namespace prefroute {

// Configuration for the external descriptive-tag endpoint. The request body is
// `request_template` with every `{{prompt}}` placeholder replaced; by default
// the prompt is substituted as a JSON string literal.
struct TaggerEndpointConfig {
  std::string base_url;          // e.g. "http://127.0.0.1:8731"
  std::string path = "/tag";
  std::string request_template = R"({"prompt": {{prompt}}})";
  bool json_escape_prompt = true;
  std::string content_type = "application/json";
  // "json": response body is an object mapping dimension -> value or [values]
  //         (optionally wrapped in a top-level "tags" object).
  // "lines": response body is plain text, one "dimension: value[, value]" per line.
  std::string response_format = "json";
  int timeout_ms = 10000;
  int retries = 2;       // additional attempts after the first
  int concurrency = 4;   // in-flight request cap
  std::string bearer_token;  // set from the environment by the CLI
};

std::string render_request_template(const TaggerEndpointConfig& config,
                                    const std::string& prompt);
std::map<std::string, std::vector<std::string>> parse_tagger_response(
    const TaggerEndpointConfig& config, const std::string& body);

class HttpTaggerClient : public TaggerClient {
 public:
  explicit HttpTaggerClient(TaggerEndpointConfig config);

  std::map<std::string, std::vector<std::string>> describe(
      const std::string& prompt) override;
  int max_in_flight() const override { return config_.concurrency; }

 private:
  TaggerEndpointConfig config_;
};

}  // namespace prefroute
