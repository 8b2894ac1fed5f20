#include "travel/openai_backend.hpp"

#include <httplib.h>

#include "travel/error.hpp"

namespace travel {

using nlohmann::json;

namespace {

// Splits "https://host:port/v1" into the scheme-host part and the path prefix.
std::pair<std::string, std::string> split_url(const std::string& url) {
  const auto scheme_end = url.find("://");
  const auto host_start = scheme_end == std::string::npos ? 0 : scheme_end + 3;
  const auto path_start = url.find('/', host_start);
  if (path_start == std::string::npos) return {url, ""};
  std::string path = url.substr(path_start);
  while (!path.empty() && path.back() == '/') path.pop_back();
  return {url.substr(0, path_start), path};
}

}  // namespace

OpenAiBackend::OpenAiBackend(BackendConfig config) : config_(std::move(config)) {
  validate_backend_config(config_);
  if (config_.endpoint_url.empty()) throw Error(Errc::ConfigError, "remote backend needs an endpoint url");
}

json chat_request_body(const RenderedPrompt& prompt, const BackendConfig& config) {
  json messages = json::array();
  for (const auto& m : prompt.messages) messages.push_back({{"role", std::string(role_name(m.role))}, {"content", m.content}});
  json body{{"model", config.model_name}, {"messages", std::move(messages)}};
  // The judge answers with one token; sampling noise only hurts there.
  body["temperature"] = prompt.kind == PromptKind::BreakdownJudge ? 0.0 : config.temperature;
  return body;
}

std::string parse_chat_response(const std::string& body) {
  json j = json::parse(body, nullptr, false);
  if (j.is_discarded()) throw Error(Errc::ParseError, "backend reply is not JSON");
  try {
    return j.at("choices").at(0).at("message").at("content").get<std::string>();
  } catch (const json::exception&) {
    throw Error(Errc::ParseError, "backend reply has no choices[0].message.content");
  }
}

BackendReply OpenAiBackend::complete(const RenderedPrompt& prompt) {
  const auto [base, prefix] = split_url(config_.endpoint_url);
  httplib::Client client(base);
  const auto timeout = std::chrono::milliseconds(config_.deadline_ms);
  client.set_connection_timeout(timeout);
  client.set_read_timeout(timeout);
  client.set_write_timeout(timeout);
  httplib::Headers headers;
  if (!config_.api_key.empty()) headers.emplace("Authorization", "Bearer " + config_.api_key);
  auto res = client.Post(prefix + "/chat/completions", headers, chat_request_body(prompt, config_).dump(),
                         "application/json");
  if (!res) throw Error(Errc::ParseError, "backend request failed: " + httplib::to_string(res.error()));
  if (res->status != 200) throw Error(Errc::ParseError, "backend returned HTTP " + std::to_string(res->status));
  return BackendReply{parse_chat_response(res->body), std::nullopt};
}

std::shared_ptr<CompletionBackend> make_backend(const BackendConfig& config) {
  if (config.endpoint_url.empty()) return std::make_shared<MockBackend>();
  return std::make_shared<OpenAiBackend>(config);
}

}  // namespace travel
