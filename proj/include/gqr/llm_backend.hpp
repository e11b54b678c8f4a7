#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <string>
#include <string_view>
#include <vector>

#include "gqr/route.hpp"

namespace gqr {

/// Environment variable holding the bearer token for the chat endpoint.
inline constexpr const char* kLlmApiKeyEnv = "GQR_LLM_API_KEY";

struct LlmRouterConfig {
  /// Full chat-completions URL, e.g. http://localhost:11434/v1/chat/completions.
  std::string endpoint;
  std::string model;
  std::int64_t timeout_ms = 30'000;
  int max_retries = 2;
  double temperature = 0.0;

  void validate() const;
};

struct RouterPrompt {
  std::string system;
  std::string user;
};

/// System and user messages for the LLM router with `query` substituted.
/// Domain names are shown capitalized; for {law, finance, health} the text
/// matches the reference router prompt byte for byte.
RouterPrompt build_router_prompt(std::span<const std::string> domains, std::string_view query);

/// Maps a completion onto a decision: exact match after trimming and
/// lowercasing against the domain names or "other". Anything else throws
/// UnparseableVerdictError.
RouteDecision parse_verdict(std::span<const std::string> domains, std::string_view completion);

struct ChatRequest {
  std::string model;
  double temperature = 0.0;
  RouterPrompt prompt;
  /// The unsubstituted user query, for transports keyed on it.
  std::string query;
};

/// Request/response JSON in the chat-completions shape.
std::string chat_request_body(const ChatRequest& request);
std::string chat_response_content(std::string_view response_body);

class ChatTransport {
 public:
  virtual ~ChatTransport() = default;
  /// Returns the raw completion text; throws TransportError on failure.
  virtual std::string complete(const ChatRequest& request) = 0;
};

class HttpChatTransport : public ChatTransport {
 public:
  explicit HttpChatTransport(LlmRouterConfig config);
  std::string complete(const ChatRequest& request) override;

 private:
  LlmRouterConfig config_;
  std::string scheme_host_port_;
  std::string path_;
};

/// Offline test double replaying completions from a JSON-lines fixture of
/// {"query": ..., "completion": ...}. Unknown queries raise TransportError.
class ReplayChatTransport : public ChatTransport {
 public:
  explicit ReplayChatTransport(std::map<std::string, std::string> completions);
  static std::shared_ptr<ReplayChatTransport> from_fixture(const std::filesystem::path& path);

  std::string complete(const ChatRequest& request) override;
  std::vector<ChatRequest> recorded() const;

 private:
  std::map<std::string, std::string> completions_;
  mutable std::mutex mutex_;
  std::vector<ChatRequest> recorded_;
};

class LlmRouter : public Router {
 public:
  LlmRouter(LlmRouterConfig config, std::vector<std::string> domains,
            std::shared_ptr<ChatTransport> transport);

  const std::vector<std::string>& domains() const override { return domains_; }
  /// Throws BackendError subclasses on transport or verdict failure.
  RouteDecision route(std::string_view query) const override;

 private:
  LlmRouterConfig config_;
  std::vector<std::string> domains_;
  std::shared_ptr<ChatTransport> transport_;
};

RouteDecision llm_route(const LlmRouterConfig& config, std::span<const std::string> domains,
                        std::string_view text, ChatTransport& transport);

LlmRouterConfig load_llm_config(const std::filesystem::path& path);

}  // namespace gqr
