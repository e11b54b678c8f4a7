#include "gqr/gateway.hpp"

#include <httplib.h>

#include <algorithm>
#include <chrono>
#include <fstream>
#include <regex>
#include <sstream>

#include <json.hpp>

#include "gqr/error.hpp"
#include "gqr/model_io.hpp"
#include "gqr/text.hpp"

namespace gqr {

using nlohmann::json;
using nlohmann::ordered_json;
using Clock = std::chrono::steady_clock;

GatewayConfig load_gateway_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw FileNotFoundError(path.string());
  GatewayConfig c;
  const auto base = path.parent_path();
  auto resolve = [&](const std::string& p) {
    std::filesystem::path fp(p);
    return fp.is_relative() ? base / fp : fp;
  };
  try {
    const auto doc = json::parse(in);
    if (doc.value("schema_version", 0) != 1)
      throw ParseError(path.string() + ": unsupported or missing schema_version");
    const std::string listen = doc.value("listen", std::string("127.0.0.1:8080"));
    const auto colon = listen.rfind(':');
    if (colon == std::string::npos) throw ParseError(path.string() + ": listen must be host:port");
    c.host = listen.substr(0, colon);
    c.port = std::stoi(listen.substr(colon + 1));
    if (doc.contains("model")) c.model_path = resolve(doc["model"].get<std::string>());
    if (doc.contains("llm")) {
      const auto& l = doc["llm"];
      LlmRouterConfig llm;
      llm.endpoint = l.at("endpoint").get<std::string>();
      llm.model = l.value("model", std::string());
      llm.timeout_ms = l.value("timeout_ms", llm.timeout_ms);
      llm.max_retries = l.value("max_retries", llm.max_retries);
      llm.temperature = l.value("temperature", llm.temperature);
      llm.validate();
      c.llm = llm;
      c.llm_domains = l.at("domains").get<std::vector<std::string>>();
      if (l.contains("replay_fixture"))
        c.llm_replay_fixture = resolve(l["replay_fixture"].get<std::string>());
    }
    if (doc.contains("threshold")) c.threshold = doc["threshold"].get<double>();
    if (doc.contains("upstreams"))
      c.upstreams = doc["upstreams"].get<std::map<std::string, std::string>>();
    const std::string reject = doc.value("reject_behavior", std::string("structured-refusal"));
    if (reject == "structured-refusal")
      c.reject_behavior = RejectBehavior::kStructuredRefusal;
    else if (reject == "http-403")
      c.reject_behavior = RejectBehavior::kHttp403;
    else
      throw ParseError(path.string() + ": unknown reject_behavior '" + reject + "'");
    c.body_limit_bytes = doc.value("body_limit_bytes", c.body_limit_bytes);
    c.timeout_ms = doc.value("timeout_ms", c.timeout_ms);
  } catch (const json::exception& e) {
    throw ParseError(path.string() + ": " + e.what());
  } catch (const std::logic_error& e) {
    throw ParseError(path.string() + ": " + e.what());
  }
  if (c.model_path.has_value() == c.llm.has_value())
    throw InvariantError("gateway config: set exactly one of 'model' and 'llm'");
  return c;
}

std::shared_ptr<const Router> make_router(const GatewayConfig& config) {
  if (config.model_path) {
    auto model = load_model(*config.model_path);
    if (config.threshold) override_threshold(model, *config.threshold);
    return std::visit(
        [](auto&& m) -> std::shared_ptr<const Router> {
          return std::make_shared<std::decay_t<decltype(m)>>(std::move(m));
        },
        std::move(model));
  }
  if (!config.llm) throw InvariantError("gateway config: no router configured");
  std::shared_ptr<ChatTransport> transport;
  if (config.llm_replay_fixture)
    transport = ReplayChatTransport::from_fixture(*config.llm_replay_fixture);
  else
    transport = std::make_shared<HttpChatTransport>(*config.llm);
  std::vector<std::string> domains;
  for (const auto& d : config.llm_domains) domains.push_back(to_lower_utf8(d));
  return std::make_shared<LlmRouter>(*config.llm, std::move(domains), std::move(transport));
}

struct Gateway::Classified {
  RouteDecision decision;
  std::string label;
  std::optional<std::string> backend_error;
  Clock::time_point start;

  double elapsed_ms() const {
    return std::chrono::duration<double, std::milli>(Clock::now() - start).count();
  }
};

Gateway::Gateway(GatewayConfig config, std::shared_ptr<const Router> router)
    : config_(std::move(config)), router_(std::move(router)) {
  if (!router_) throw InvariantError("gateway: router is required");
  const auto& domains = router_->domains();
  routes_ = std::make_unique<std::atomic<std::uint64_t>[]>(domains.size());
  if (!config_.upstreams.empty()) {
    for (const auto& [domain, url] : config_.upstreams)
      if (std::find(domains.begin(), domains.end(), domain) == domains.end())
        throw InvariantError("gateway config: upstream for unknown domain '" + domain + "'");
    for (const auto& d : domains) {
      auto it = config_.upstreams.find(d);
      if (it == config_.upstreams.end())
        throw InvariantError("gateway config: no upstream for domain '" + d + "'");
      upstream_by_domain_.push_back(it->second);
    }
  }
}

Gateway::~Gateway() = default;

namespace {

HttpReply json_reply(int status, const ordered_json& body) { return {status, body.dump(), "application/json", {}}; }

ordered_json scores_json(const std::vector<std::string>& domains, const RouteDecision& d) {
  ordered_json scores = ordered_json::object();
  for (std::size_t i = 0; i < domains.size() && i < d.scores.size(); ++i) scores[domains[i]] = d.scores[i];
  return scores;
}

}  // namespace

std::optional<Gateway::Classified> Gateway::classify(const std::string& body,
                                                     HttpReply& error) const {
  Classified c;
  c.start = Clock::now();
  json doc;
  try {
    doc = json::parse(body);
  } catch (const json::parse_error&) {
    error = json_reply(400, {{"error", "request body must be JSON"}});
    return std::nullopt;
  }
  if (!doc.is_object() || !doc.contains("query") || !doc["query"].is_string()) {
    error = json_reply(400, {{"error", "field 'query' (string) is required"}});
    return std::nullopt;
  }
  const auto& query = doc["query"].get_ref<const std::string&>();
  if (trim_unicode(query).empty()) {
    error = json_reply(400, {{"error", "field 'query' must not be empty"}});
    return std::nullopt;
  }
  try {
    c.decision = router_->route(query);
  } catch (const BackendError& e) {
    // Fail closed.
    c.decision = RouteDecision{std::nullopt, std::vector<double>(router_->domains().size(), 0.0), false};
    c.backend_error = e.what();
  }
  c.label = router_->decision_label(c.decision);
  return c;
}

void Gateway::count(const Classified& c) const {
  if (c.backend_error) ++backend_errors_;
  if (c.decision.rejected())
    ++rejects_;
  else
    ++routes_[*c.decision.domain];
}

HttpReply Gateway::handle_route(const std::string& body) const {
  ++requests_;
  HttpReply error;
  auto c = classify(body, error);
  if (!c) return error;
  count(*c);
  ordered_json out{{"decision", c->label},
                   {"scores", scores_json(router_->domains(), c->decision)},
                   {"latency_ms", c->elapsed_ms()}};
  if (!c->decision.calibrated) out["calibrated"] = false;
  if (c->backend_error) out["backend_error"] = *c->backend_error;
  return json_reply(200, out);
}

HttpReply Gateway::handle_forward(const std::string& body) const {
  ++requests_;
  if (!forwarding())
    return json_reply(404, {{"error", "forwarding is not configured (classify-only mode)"}});
  HttpReply error;
  auto c = classify(body, error);
  if (!c) return error;
  count(*c);

  if (c->decision.rejected()) {
    ordered_json out{{"decision", "reject"},
                     {"reason", "out_of_distribution"},
                     {"scores", scores_json(router_->domains(), c->decision)},
                     {"latency_ms", c->elapsed_ms()}};
    if (c->backend_error) out["backend_error"] = *c->backend_error;
    return json_reply(config_.reject_behavior == RejectBehavior::kHttp403 ? 403 : 200, out);
  }

  static const std::regex kUrl(R"(^(https?://[^/]+)(/.*)?$)");
  const std::string& url = upstream_by_domain_[*c->decision.domain];
  std::smatch m;
  if (!std::regex_match(url, m, kUrl)) {
    ++upstream_errors_;
    return json_reply(502, {{"decision", c->label}, {"upstream_error", "invalid upstream URL"}});
  }
  httplib::Client client(m[1].str());
  const auto sec = config_.timeout_ms / 1000, usec = (config_.timeout_ms % 1000) * 1000;
  client.set_connection_timeout(sec, usec);
  client.set_read_timeout(sec, usec);
  client.set_write_timeout(sec, usec);
  const std::string path = m[2].matched ? m[2].str() : "/";
  auto res = client.Post(path, {{"X-GQR-Domain", c->label}}, body, "application/json");
  if (!res) {
    ++upstream_errors_;
    return json_reply(502, {{"decision", c->label},
                            {"upstream_error", httplib::to_string(res.error())},
                            {"latency_ms", c->elapsed_ms()}});
  }
  HttpReply reply;
  reply.status = res->status;
  reply.body = res->body;
  reply.content_type = res->get_header_value("Content-Type");
  if (reply.content_type.empty()) reply.content_type = "text/plain";
  reply.headers.emplace("X-GQR-Domain", c->label);
  std::ostringstream latency;
  latency << c->elapsed_ms();
  reply.headers.emplace("X-GQR-Latency-Ms", latency.str());
  return reply;
}

std::string Gateway::metrics_text() const {
  std::ostringstream out;
  out << "gqr_requests_total " << requests_.load() << '\n';
  out << "gqr_rejects_total " << rejects_.load() << '\n';
  out << "gqr_backend_errors_total " << backend_errors_.load() << '\n';
  out << "gqr_upstream_errors_total " << upstream_errors_.load() << '\n';
  const auto& domains = router_->domains();
  for (std::size_t i = 0; i < domains.size(); ++i)
    out << "gqr_routes_total{domain=\"" << domains[i] << "\"} " << routes_[i].load() << '\n';
  return out.str();
}

int Gateway::bind() {
  server_ = std::make_unique<httplib::Server>();
  auto& s = *server_;
  s.set_payload_max_length(config_.body_limit_bytes);
  const auto sec = config_.timeout_ms / 1000, usec = (config_.timeout_ms % 1000) * 1000;
  s.set_read_timeout(sec, usec);
  s.set_write_timeout(sec, usec);

  auto send = [](httplib::Response& res, const HttpReply& reply) {
    res.status = reply.status;
    for (const auto& [k, v] : reply.headers) res.set_header(k, v);
    res.set_content(reply.body, reply.content_type);
  };
  s.Post("/route", [this, send](const httplib::Request& req, httplib::Response& res) {
    send(res, handle_route(req.body));
  });
  s.Post("/forward", [this, send](const httplib::Request& req, httplib::Response& res) {
    send(res, handle_forward(req.body));
  });
  s.Get("/healthz", [](const httplib::Request&, httplib::Response& res) {
    res.set_content("ok", "text/plain");
  });
  s.Get("/metrics", [this](const httplib::Request&, httplib::Response& res) {
    res.set_content(metrics_text(), "text/plain; version=0.0.4");
  });

  const int port = config_.port == 0 ? s.bind_to_any_port(config_.host)
                                     : (s.bind_to_port(config_.host, config_.port) ? config_.port : -1);
  if (port < 0)
    throw Error("cannot bind " + config_.host + ":" + std::to_string(config_.port));
  return port;
}

void Gateway::run() {
  if (!server_) bind();
  server_->listen_after_bind();
}

void Gateway::stop() {
  if (server_) server_->stop();
}

void Gateway::wait_until_ready() const {
  if (server_) server_->wait_until_ready();
}

}  // namespace gqr
