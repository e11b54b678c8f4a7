#include <httplib.h>

#include <atomic>
#include <cstdlib>
#include <thread>

#include <json.hpp>

#include "doctest.h"
#include "gqr/error.hpp"
#include "gqr/llm_backend.hpp"
#include "test_util.hpp"

using namespace gqr;
using gqr::testing::TempDir;
using gqr::testing::write_file;
using nlohmann::json;

namespace {

const std::vector<std::string> kDomains{"law", "finance", "health"};

LlmRouterConfig test_config(std::string endpoint = "http://127.0.0.1:1/v1/chat/completions") {
  LlmRouterConfig c;
  c.endpoint = std::move(endpoint);
  c.model = "test-model";
  c.timeout_ms = 2000;
  c.max_retries = 2;
  return c;
}

// Fails the first `failures` calls, then answers.
class FlakyTransport : public ChatTransport {
 public:
  FlakyTransport(int failures, std::string answer) : failures_(failures), answer_(std::move(answer)) {}
  std::string complete(const ChatRequest& request) override {
    requests.push_back(request);
    if (static_cast<int>(requests.size()) <= failures_) throw TransportError("connection reset");
    return answer_;
  }
  std::vector<ChatRequest> requests;

 private:
  int failures_;
  std::string answer_;
};

// Local chat-completions endpoint echoing a fixed verdict.
class StubServer {
 public:
  explicit StubServer(std::string verdict, int status = 200) {
    server_.Post("/v1/chat/completions", [this, verdict, status](const httplib::Request& req,
                                                                 httplib::Response& res) {
      last_body = req.body;
      last_auth = req.get_header_value("Authorization");
      ++calls;
      res.status = status;
      res.set_content(json{{"choices", {{{"message", {{"role", "assistant"}, {"content", verdict}}}}}}}.dump(),
                      "application/json");
    });
    port_ = server_.bind_to_any_port("127.0.0.1");
    thread_ = std::thread([this] { server_.listen_after_bind(); });
    server_.wait_until_ready();
  }
  ~StubServer() {
    server_.stop();
    thread_.join();
  }
  std::string url() const { return "http://127.0.0.1:" + std::to_string(port_) + "/v1/chat/completions"; }

  std::string last_body;
  std::string last_auth;
  std::atomic<int> calls{0};

 private:
  httplib::Server server_;
  int port_ = 0;
  std::thread thread_;
};

}  // namespace

TEST_CASE("router prompt matches the reference template for three domains") {
  const auto p = build_router_prompt(kDomains, "How do I contest a will?");
  CHECK(p.system ==
        "You are a highly accurate text classifier. Your task is to categorize passages into one "
        "of four predefined domains. The ONLY valid categories are: Law, Finance, Health, and "
        "Other. Any passage that does not clearly belong to Law, Finance, or Health MUST be "
        "categorized as Other. You must respond with ONLY the category name, and nothing else.  "
        "No explanations, no extra words.");
  CHECK(p.user ==
        "Classify the following passage into one of the categories: Law, Finance, Health, or "
        "Other.\nPassage:\nHow do I contest a will?\nCategory:");
}

TEST_CASE("router prompt generalizes to other domain counts") {
  const std::vector<std::string> two{"law", "tax"};
  const auto p = build_router_prompt(two, "q");
  CHECK(p.system.find("one of three predefined domains") != std::string::npos);
  CHECK(p.system.find("are: Law, Tax, and Other.") != std::string::npos);
  CHECK(p.system.find("belong to Law or Tax MUST") != std::string::npos);
  CHECK(p.user.find("categories: Law, Tax, or Other.") != std::string::npos);
}

TEST_CASE("verdicts parse by exact match after trim and lowercase") {
  auto d = parse_verdict(kDomains, "Finance");
  CHECK(d.domain == std::optional<std::size_t>(1));
  CHECK(d.scores == std::vector<double>{0.0, 1.0, 0.0});
  CHECK_FALSE(d.calibrated);

  CHECK(parse_verdict(kDomains, "  HEALTH\n").domain == std::optional<std::size_t>(2));
  const auto other = parse_verdict(kDomains, "Other");
  CHECK(other.rejected());
  CHECK(other.scores == std::vector<double>{0.0, 0.0, 0.0});
  CHECK(parse_verdict(kDomains, "other ").rejected());

  for (const char* bad : {"Category: Law", "Law.", "law finance", "", "sports"}) {
    CAPTURE(bad);
    try {
      parse_verdict(kDomains, bad);
      FAIL("expected UnparseableVerdictError");
    } catch (const UnparseableVerdictError& e) {
      CHECK(e.completion() == bad);
    }
  }
}

TEST_CASE("chat request and response use the chat-completions shape") {
  const ChatRequest req{"m", 0.0, build_router_prompt(kDomains, "q"), "q"};
  const auto body = json::parse(chat_request_body(req));
  CHECK(body["model"] == "m");
  CHECK(body["temperature"] == 0.0);
  REQUIRE(body["messages"].size() == 2);
  CHECK(body["messages"][0]["role"] == "system");
  CHECK(body["messages"][1]["role"] == "user");
  CHECK(body["messages"][1]["content"] == req.prompt.user);

  CHECK(chat_response_content(R"({"choices":[{"message":{"content":"Law"}}]})") == "Law");
  CHECK_THROWS_AS(chat_response_content("{}"), TransportError);
  CHECK_THROWS_AS(chat_response_content("not json"), TransportError);
}

TEST_CASE("retries are bounded and resend the same prompt") {
  SUBCASE("recovers within the retry budget") {
    FlakyTransport t(2, "Law");
    CHECK(llm_route(test_config(), kDomains, "q", t).domain == std::optional<std::size_t>(0));
    REQUIRE(t.requests.size() == 3);
    CHECK(t.requests[0].prompt.system == t.requests[2].prompt.system);
    CHECK(t.requests[0].prompt.user == t.requests[2].prompt.user);
  }
  SUBCASE("gives up after max_retries + 1 attempts") {
    FlakyTransport t(100, "Law");
    CHECK_THROWS_AS(llm_route(test_config(), kDomains, "q", t), TransportError);
    CHECK(t.requests.size() == 3);
  }
  SUBCASE("unparseable verdicts are not retried") {
    FlakyTransport t(0, "I think Law");
    CHECK_THROWS_AS(llm_route(test_config(), kDomains, "q", t), UnparseableVerdictError);
    CHECK(t.requests.size() == 1);
  }
  SUBCASE("zero retries") {
    auto cfg = test_config();
    cfg.max_retries = 0;
    FlakyTransport t(1, "Law");
    CHECK_THROWS_AS(llm_route(cfg, kDomains, "q", t), TransportError);
    CHECK(t.requests.size() == 1);
  }
}

TEST_CASE("config validation") {
  auto c = test_config();
  c.max_retries = 6;
  CHECK_THROWS_AS(c.validate(), InvariantError);
  c = test_config();
  c.timeout_ms = 0;
  CHECK_THROWS_AS(c.validate(), InvariantError);
  CHECK_THROWS_AS(HttpChatTransport(test_config("ftp://x")), InvariantError);
}

TEST_CASE("load_llm_config reads the documented keys") {
  TempDir dir;
  write_file(dir / "llm.json",
             R"({"endpoint": "http://localhost:9/v1/chat/completions", "model": "x", "max_retries": 1})");
  const auto c = load_llm_config(dir / "llm.json");
  CHECK(c.endpoint == "http://localhost:9/v1/chat/completions");
  CHECK(c.model == "x");
  CHECK(c.max_retries == 1);
  CHECK(c.timeout_ms == 30'000);
  CHECK(c.temperature == 0.0);
  write_file(dir / "bad.json", R"({"model": "x"})");
  CHECK_THROWS_AS(load_llm_config(dir / "bad.json"), ParseError);
  CHECK_THROWS_AS(load_llm_config(dir / "missing.json"), FileNotFoundError);
}

TEST_CASE("replay transport answers from its fixture and records requests") {
  TempDir dir;
  write_file(dir / "fixture.jsonl",
             R"({"query": "contest a will", "completion": "Law"})" "\n"
             R"({"query": "write a poem", "completion": "Other"})" "\n");
  const auto replay = ReplayChatTransport::from_fixture(dir / "fixture.jsonl");
  const LlmRouter router(test_config(), kDomains, replay);
  CHECK(router.route("contest a will").domain == std::optional<std::size_t>(0));
  CHECK(router.route("write a poem").rejected());
  CHECK_THROWS_AS(router.route("unknown"), TransportError);
  // 2 answered + 3 attempts for the unknown query.
  CHECK(replay->recorded().size() == 5);

  write_file(dir / "broken.jsonl", "{\"query\": 1}\n");
  CHECK_THROWS_AS(ReplayChatTransport::from_fixture(dir / "broken.jsonl"), ParseError);
}

TEST_CASE("HTTP transport talks to a chat-completions endpoint") {
  StubServer stub(" Health ");
  ::setenv(kLlmApiKeyEnv, "secret-token", 1);
  const LlmRouter router(test_config(stub.url()), kDomains,
                         std::make_shared<HttpChatTransport>(test_config(stub.url())));
  CHECK(router.route("my knee hurts").domain == std::optional<std::size_t>(2));
  ::unsetenv(kLlmApiKeyEnv);
  CHECK(stub.last_auth == "Bearer secret-token");
  const auto body = json::parse(stub.last_body);
  CHECK(body["model"] == "test-model");
  CHECK(body["messages"][1]["content"].get<std::string>().find("my knee hurts") != std::string::npos);
}

TEST_CASE("HTTP errors surface as transport errors after retries") {
  StubServer stub("Law", 500);
  auto cfg = test_config(stub.url());
  cfg.max_retries = 1;
  HttpChatTransport transport(cfg);
  CHECK_THROWS_AS(llm_route(cfg, kDomains, "q", transport), TransportError);
  CHECK(stub.calls == 2);

  auto unreachable = test_config("http://127.0.0.1:1/v1/chat/completions");
  unreachable.max_retries = 0;
  unreachable.timeout_ms = 500;
  HttpChatTransport dead(unreachable);
  CHECK_THROWS_AS(llm_route(unreachable, kDomains, "q", dead), TransportError);
}
