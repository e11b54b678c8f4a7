#include "gqr/llm_backend.hpp"

#include <httplib.h>

#include <cstdlib>
#include <fstream>
#include <regex>

#include <json.hpp>

#include "gqr/error.hpp"
#include "gqr/text.hpp"

namespace gqr {

using nlohmann::json;

void LlmRouterConfig::validate() const {
  if (timeout_ms <= 0) throw InvariantError("llm config: timeout must be positive");
  if (max_retries < 0 || max_retries > 5) throw InvariantError("llm config: retries must be in [0,5]");
  if (endpoint.empty()) throw InvariantError("llm config: endpoint is required");
}

namespace {

std::string display_name(std::string_view domain) {
  std::string out(domain);
  if (!out.empty() && out[0] >= 'a' && out[0] <= 'z') out[0] = static_cast<char>(out[0] - 'a' + 'A');
  return out;
}

std::string number_word(std::size_t n) {
  static constexpr const char* kWords[] = {"zero", "one", "two",   "three", "four", "five",
                                           "six",  "seven", "eight", "nine", "ten"};
  return n < std::size(kWords) ? kWords[n] : std::to_string(n);
}

// "A, B, or C" / "A or B".
std::string join_list(const std::vector<std::string>& items, std::string_view conjunction) {
  if (items.size() == 1) return items[0];
  if (items.size() == 2) return items[0] + " " + std::string(conjunction) + " " + items[1];
  std::string out;
  for (std::size_t i = 0; i < items.size(); ++i) {
    if (i > 0) out += ", ";
    if (i + 1 == items.size()) out += std::string(conjunction) + " ";
    out += items[i];
  }
  return out;
}

}  // namespace

RouterPrompt build_router_prompt(std::span<const std::string> domains, std::string_view query) {
  std::vector<std::string> names;
  for (const auto& d : domains) names.push_back(display_name(d));
  std::vector<std::string> with_other = names;
  with_other.push_back("Other");

  RouterPrompt p;
  p.system = "You are a highly accurate text classifier. Your task is to categorize passages into "
             "one of " + number_word(with_other.size()) +
             " predefined domains. The ONLY valid categories are: " + join_list(with_other, "and") +
             ". Any passage that does not clearly belong to " + join_list(names, "or") +
             " MUST be categorized as Other. You must respond with ONLY the category name, and "
             "nothing else.  No explanations, no extra words.";
  p.user = "Classify the following passage into one of the categories: " +
           join_list(with_other, "or") + ".\nPassage:\n" + std::string(query) + "\nCategory:";
  return p;
}

RouteDecision parse_verdict(std::span<const std::string> domains, std::string_view completion) {
  const std::string verdict = to_lower_utf8(trim_unicode(completion));
  RouteDecision d;
  d.calibrated = false;
  d.scores.assign(domains.size(), 0.0);
  if (verdict == "other") return d;
  for (std::size_t i = 0; i < domains.size(); ++i) {
    if (verdict == to_lower_utf8(domains[i])) {
      d.domain = i;
      d.scores[i] = 1.0;
      return d;
    }
  }
  throw UnparseableVerdictError(std::string(completion));
}

std::string chat_request_body(const ChatRequest& request) {
  json body{{"model", request.model},
            {"temperature", request.temperature},
            {"messages",
             json::array({{{"role", "system"}, {"content", request.prompt.system}},
                          {{"role", "user"}, {"content", request.prompt.user}}})}};
  return body.dump();
}

std::string chat_response_content(std::string_view response_body) {
  try {
    const auto doc = json::parse(response_body);
    return doc.at("choices").at(0).at("message").at("content").get<std::string>();
  } catch (const json::exception& e) {
    throw TransportError(std::string("malformed chat-completions response: ") + e.what());
  }
}

HttpChatTransport::HttpChatTransport(LlmRouterConfig config) : config_(std::move(config)) {
  config_.validate();
  static const std::regex kUrl(R"(^(https?://[^/]+)(/.*)?$)");
  std::smatch m;
  if (!std::regex_match(config_.endpoint, m, kUrl))
    throw InvariantError("llm config: endpoint must be an http(s) URL: " + config_.endpoint);
  scheme_host_port_ = m[1];
  path_ = m[2].matched ? std::string(m[2]) : std::string("/");
}

std::string HttpChatTransport::complete(const ChatRequest& request) {
  httplib::Client client(scheme_host_port_);
  const auto sec = config_.timeout_ms / 1000;
  const auto usec = (config_.timeout_ms % 1000) * 1000;
  client.set_connection_timeout(sec, usec);
  client.set_read_timeout(sec, usec);
  client.set_write_timeout(sec, usec);
  httplib::Headers headers;
  if (const char* key = std::getenv(kLlmApiKeyEnv); key && *key)
    headers.emplace("Authorization", std::string("Bearer ") + key);
  auto res = client.Post(path_, headers, chat_request_body(request), "application/json");
  if (!res) throw TransportError("chat endpoint unreachable: " + httplib::to_string(res.error()));
  if (res->status != 200)
    throw TransportError("chat endpoint returned HTTP " + std::to_string(res->status));
  return chat_response_content(res->body);
}

ReplayChatTransport::ReplayChatTransport(std::map<std::string, std::string> completions)
    : completions_(std::move(completions)) {}

std::shared_ptr<ReplayChatTransport> ReplayChatTransport::from_fixture(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw FileNotFoundError(path.string());
  std::map<std::string, std::string> completions;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim_unicode(line).empty()) continue;
    try {
      const auto obj = json::parse(line);
      completions[obj.at("query").get<std::string>()] = obj.at("completion").get<std::string>();
    } catch (const json::exception& e) {
      throw ParseError(path.string() + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
  return std::make_shared<ReplayChatTransport>(std::move(completions));
}

std::string ReplayChatTransport::complete(const ChatRequest& request) {
  std::lock_guard lock(mutex_);
  recorded_.push_back(request);
  auto it = completions_.find(request.query);
  if (it == completions_.end()) throw TransportError("replay fixture has no entry for query");
  return it->second;
}

std::vector<ChatRequest> ReplayChatTransport::recorded() const {
  std::lock_guard lock(mutex_);
  return recorded_;
}

RouteDecision llm_route(const LlmRouterConfig& config, std::span<const std::string> domains,
                        std::string_view text, ChatTransport& transport) {
  const ChatRequest request{config.model, config.temperature, build_router_prompt(domains, text),
                            std::string(text)};
  for (int attempt = 0;; ++attempt) {
    try {
      return parse_verdict(domains, transport.complete(request));
    } catch (const TransportError&) {
      if (attempt >= config.max_retries) throw;
    }
  }
}

LlmRouter::LlmRouter(LlmRouterConfig config, std::vector<std::string> domains,
                     std::shared_ptr<ChatTransport> transport)
    : config_(std::move(config)), domains_(std::move(domains)), transport_(std::move(transport)) {
  config_.validate();
  if (!transport_) throw InvariantError("llm router: transport is required");
}

RouteDecision LlmRouter::route(std::string_view query) const {
  return llm_route(config_, domains_, query, *transport_);
}

LlmRouterConfig load_llm_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw FileNotFoundError(path.string());
  LlmRouterConfig c;
  try {
    const auto doc = json::parse(in);
    c.endpoint = doc.at("endpoint").get<std::string>();
    c.model = doc.value("model", std::string());
    c.timeout_ms = doc.value("timeout_ms", c.timeout_ms);
    c.max_retries = doc.value("max_retries", c.max_retries);
    c.temperature = doc.value("temperature", c.temperature);
  } catch (const json::exception& e) {
    throw ParseError(path.string() + ": " + e.what());
  }
  c.validate();
  return c;
}

}  // namespace gqr
