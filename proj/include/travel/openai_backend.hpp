#pragma once

#include <memory>
#include <string>

#include <json.hpp>

#include "travel/nlg.hpp"

namespace travel {

// Chat-completions client for any OpenAI-compatible endpoint. Blocking; run
// it through complete_with_deadline.
class OpenAiBackend final : public CompletionBackend {
 public:
  explicit OpenAiBackend(BackendConfig config);
  BackendReply complete(const RenderedPrompt& prompt) override;
  ResponseSource source() const override { return ResponseSource::Remote; }

 private:
  BackendConfig config_;
};

nlohmann::json chat_request_body(const RenderedPrompt& prompt, const BackendConfig& config);
// choices[0].message.content; throws ParseError.
std::string parse_chat_response(const std::string& body);

// The mock when no endpoint is configured, the remote client otherwise.
std::shared_ptr<CompletionBackend> make_backend(const BackendConfig& config);

}  // namespace travel
