#include "prefroute/tagger_client.hpp"

#include <sstream>

#include "httplib.h"
#include "prefroute/errors.hpp"
#include "prefroute/jsonl.hpp"

namespace prefroute {

namespace {

void replace_all(std::string& text, std::string_view needle, std::string_view with) {
  std::size_t pos = 0;
  while ((pos = text.find(needle, pos)) != std::string::npos) {
    text.replace(pos, needle.size(), with);
    pos += with.size();
  }
}

std::vector<std::string> split_csv_values(const std::string& text) {
  std::vector<std::string> out;
  std::string cur;
  std::istringstream in(text);
  while (std::getline(in, cur, ',')) {
    const auto begin = cur.find_first_not_of(" \t");
    if (begin == std::string::npos) continue;
    const auto end = cur.find_last_not_of(" \t");
    out.push_back(cur.substr(begin, end - begin + 1));
  }
  return out;
}

}  // namespace

std::string render_request_template(const TaggerEndpointConfig& config,
                                    const std::string& prompt) {
  std::string substituted = prompt;
  if (config.json_escape_prompt) {
    substituted = Json(prompt).dump();
  }
  std::string body = config.request_template;
  replace_all(body, "{{ prompt }}", substituted);
  replace_all(body, "{{prompt}}", substituted);
  return body;
}

std::map<std::string, std::vector<std::string>> parse_tagger_response(
    const TaggerEndpointConfig& config, const std::string& body) {
  std::map<std::string, std::vector<std::string>> out;
  if (config.response_format == "lines") {
    std::istringstream in(body);
    std::string line;
    while (std::getline(in, line)) {
      const auto colon = line.find(':');
      if (colon == std::string::npos) continue;
      const std::string dimension = normalize_tag_value(line.substr(0, colon));
      if (dimension.empty()) continue;
      auto values = split_csv_values(line.substr(colon + 1));
      if (!values.empty()) out[dimension] = std::move(values);
    }
    if (out.empty())
      throw ExternalServiceError("tagger response contained no `dimension: value` lines");
    return out;
  }

  Json parsed = Json::parse(body, nullptr, false);
  if (parsed.is_discarded() || !parsed.is_object())
    throw ExternalServiceError("tagger response is not a JSON object");
  const Json& tags = (parsed.contains("tags") && parsed["tags"].is_object())
                         ? parsed["tags"]
                         : parsed;
  for (const auto& [dimension, value] : tags.items()) {
    std::vector<std::string> values;
    if (value.is_string()) {
      values.push_back(value.get<std::string>());
    } else if (value.is_boolean()) {
      if (value.get<bool>()) values.push_back("present");
    } else if (value.is_array()) {
      for (const auto& v : value)
        if (v.is_string()) values.push_back(v.get<std::string>());
    }
    if (!values.empty()) out[dimension] = std::move(values);
  }
  if (out.empty())
    throw ExternalServiceError("tagger response carried no usable dimensions");
  return out;
}

HttpTaggerClient::HttpTaggerClient(TaggerEndpointConfig config)
    : config_(std::move(config)) {
  if (config_.base_url.empty())
    throw ValidationError("tagger endpoint base_url is required");
}

std::map<std::string, std::vector<std::string>> HttpTaggerClient::describe(
    const std::string& prompt) {
  const std::string body = render_request_template(config_, prompt);
  std::string last_error;
  for (int attempt = 0; attempt <= config_.retries; ++attempt) {
    httplib::Client client(config_.base_url);
    client.set_connection_timeout(0, config_.timeout_ms * 1000);
    client.set_read_timeout(0, config_.timeout_ms * 1000);
    if (!config_.bearer_token.empty())
      client.set_bearer_token_auth(config_.bearer_token);
    auto res = client.Post(config_.path, body, config_.content_type);
    if (!res) {
      last_error = "connection failed: " + httplib::to_string(res.error());
      continue;
    }
    if (res->status >= 500) {
      last_error = "server error " + std::to_string(res->status);
      continue;
    }
    if (res->status != 200)
      throw ExternalServiceError("tagger endpoint returned status " +
                                 std::to_string(res->status));
    return parse_tagger_response(config_, res->body);
  }
  throw ExternalServiceError("tagger endpoint failed after " +
                             std::to_string(config_.retries + 1) + " attempt(s): " +
                             last_error);
}

}  // namespace prefroute
