#pragma once

#include <atomic>
#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "gqr/llm_backend.hpp"
#include "gqr/route.hpp"

namespace httplib {
class Server;
}

namespace gqr {

enum class RejectBehavior { kStructuredRefusal, kHttp403 };

struct GatewayConfig {
  std::string host = "127.0.0.1";
  int port = 8080;
  /// Exactly one of model_path / llm is set.
  std::optional<std::filesystem::path> model_path;
  std::optional<LlmRouterConfig> llm;
  /// Domains for the LLM backend (a model artifact carries its own).
  std::vector<std::string> llm_domains;
  /// Replays LLM completions from a fixture instead of calling the endpoint.
  std::optional<std::filesystem::path> llm_replay_fixture;
  /// Serve-time override of the model's stored threshold.
  std::optional<double> threshold;
  /// Domain -> upstream URL. Empty means classify-only mode.
  std::map<std::string, std::string> upstreams;
  RejectBehavior reject_behavior = RejectBehavior::kStructuredRefusal;
  std::size_t body_limit_bytes = 64 * 1024;
  std::int64_t timeout_ms = 10'000;
};

/// Reads the JSON config; relative paths resolve against its directory.
GatewayConfig load_gateway_config(const std::filesystem::path& path);

/// Builds the router the config names (model artifact or LLM backend),
/// applying any threshold override.
std::shared_ptr<const Router> make_router(const GatewayConfig& config);

struct HttpReply {
  int status = 200;
  std::string body;
  std::string content_type = "application/json";
  std::multimap<std::string, std::string> headers;
};

/// Guards and routes live queries over HTTP:
///   POST /route    {"query": ...} -> decision, scores, latency_ms
///   POST /forward  proxies the raw body to the upstream of the chosen domain
///   GET  /healthz  "ok"
///   GET  /metrics  plain-text counters
class Gateway {
 public:
  Gateway(GatewayConfig config, std::shared_ptr<const Router> router);
  ~Gateway();
  Gateway(const Gateway&) = delete;
  Gateway& operator=(const Gateway&) = delete;

  /// Binds the listening socket; port 0 picks a free port. Returns the port.
  int bind();
  /// Serves until stop(). In-flight requests complete before it returns.
  void run();
  void stop();
  void wait_until_ready() const;

  HttpReply handle_route(const std::string& body) const;
  HttpReply handle_forward(const std::string& body) const;
  std::string metrics_text() const;

  bool forwarding() const noexcept { return !config_.upstreams.empty(); }

 private:
  struct Classified;
  std::optional<Classified> classify(const std::string& body, HttpReply& error) const;
  void count(const Classified& c) const;

  GatewayConfig config_;
  std::shared_ptr<const Router> router_;
  std::vector<std::string> upstream_by_domain_;
  std::unique_ptr<httplib::Server> server_;

  mutable std::atomic<std::uint64_t> requests_{0};
  mutable std::atomic<std::uint64_t> rejects_{0};
  mutable std::atomic<std::uint64_t> backend_errors_{0};
  mutable std::atomic<std::uint64_t> upstream_errors_{0};
  mutable std::unique_ptr<std::atomic<std::uint64_t>[]> routes_;
};

}  // namespace gqr
