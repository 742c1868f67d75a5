#include <gtest/gtest.h>

#include <atomic>
#include <cstdlib>
#include <thread>

#include "mastune/world_http.hpp"
#include "test_support.hpp"

using namespace mastune;
using namespace mastune::testing;

namespace {

// Local chat server; `plan` gives the status of successive requests, 200 after it runs out.
class FakeServer {
 public:
  explicit FakeServer(std::vector<int> plan, std::string content = "the result is ANSWER")
      : plan_(std::move(plan)), content_(std::move(content)) {
    server_.Post("/v1/chat", [this](const httplib::Request& req, httplib::Response& res) {
      const std::size_t k = hits_++;
      last_body_ = req.body;
      last_auth_ = req.get_header_value("Authorization");
      const int status = k < plan_.size() ? plan_[k] : 200;
      res.status = status;
      if (status == 200) {
        const nlohmann::json j{{"content", content_}, {"usage", {{"prompt_tokens", 12}, {"completion_tokens", 34}}}};
        res.set_content(content_ == "<garbage>" ? std::string("{not json") : j.dump(), "application/json");
      }
    });
    port_ = server_.bind_to_any_port("127.0.0.1");
    thread_ = std::thread([this] { server_.listen_after_bind(); });
    server_.wait_until_ready();
  }
  ~FakeServer() {
    server_.stop();
    thread_.join();
  }

  std::string url() const { return "http://127.0.0.1:" + std::to_string(port_) + "/v1/chat"; }
  std::size_t hits() const { return hits_; }
  const std::string& last_body() const { return last_body_; }
  const std::string& last_auth() const { return last_auth_; }

 private:
  httplib::Server server_;
  std::vector<int> plan_;
  std::string content_;
  std::atomic<std::size_t> hits_{0};
  std::string last_body_, last_auth_;
  int port_ = 0;
  std::thread thread_;
};

HttpBackendConfig fast(const std::string& url) {
  HttpBackendConfig c;
  c.url = url;
  c.timeout_seconds = 5;
  c.backoff_ms = 1;
  c.retries = 2;
  c.api_key_env = "MASTUNE_TEST_KEY_UNSET";
  return c;
}

struct Request {
  Task t = task("t");
  RoleProfile r = role("r");
  ModelProfile m = model("m", {1, 0, 0});
  AgentRequest req() const {
    AgentRequest a;
    a.task = &t;
    a.role = &r;
    a.model = &m;
    a.position = PositionType::synthesizer;
    a.inbound_text = {"upstream draft"};
    return a;
  }
};

}  // namespace

TEST(HttpBackend, ParsesReplyAndScoresTag) {
  FakeServer s({});
  HttpBackend be(fast(s.url()));
  Request q;
  Rng rng(1);
  const AgentOutput o = be.invoke(q.req(), rng);
  EXPECT_EQ(o.quality, 1.0);
  EXPECT_EQ(o.tokens_in, 12);
  EXPECT_EQ(o.tokens_out, 34);
  EXPECT_FALSE(be.quality_observable());
  const auto body = nlohmann::json::parse(s.last_body());
  EXPECT_EQ(body["model"], "m");
  EXPECT_NE(body["messages"][1]["content"].get<std::string>().find("upstream draft"), std::string::npos);
  EXPECT_EQ(s.last_auth(), "");
}

TEST(HttpBackend, MissingTagScoresZero) {
  FakeServer s({}, "no idea");
  HttpBackend be(fast(s.url()));
  Request q;
  Rng rng(1);
  EXPECT_EQ(be.invoke(q.req(), rng).quality, 0.0);
}

TEST(HttpBackend, RetriesServerErrors) {
  FakeServer s({500, 503});
  HttpBackend be(fast(s.url()));
  Request q;
  Rng rng(1);
  EXPECT_EQ(be.invoke(q.req(), rng).quality, 1.0);
  EXPECT_EQ(s.hits(), 3u);
}

TEST(HttpBackend, GivesUpAfterRetries) {
  FakeServer s({500, 500, 500, 500});
  HttpBackend be(fast(s.url()));
  Request q;
  Rng rng(1);
  EXPECT_THROW(be.invoke(q.req(), rng), Error);
  EXPECT_EQ(s.hits(), 3u);
}

TEST(HttpBackend, ClientErrorNotRetried) {
  FakeServer s({401});
  HttpBackend be(fast(s.url()));
  Request q;
  Rng rng(1);
  try {
    be.invoke(q.req(), rng);
    FAIL();
  } catch (const Error& e) {
    EXPECT_NE(std::string(e.what()).find("HTTP 401"), std::string::npos);
  }
  EXPECT_EQ(s.hits(), 1u);
}

TEST(HttpBackend, MalformedReplyIsParseError) {
  FakeServer s({}, "<garbage>");
  HttpBackend be(fast(s.url()));
  Request q;
  Rng rng(1);
  EXPECT_THROW(be.invoke(q.req(), rng), ParseError);
}

TEST(HttpBackend, SendsBearerTokenFromEnvironment) {
  FakeServer s({});
  ::setenv("MASTUNE_TEST_KEY", "sekrit", 1);
  HttpBackendConfig c = fast(s.url());
  c.api_key_env = "MASTUNE_TEST_KEY";
  HttpBackend be(c);
  Request q;
  Rng rng(1);
  be.invoke(q.req(), rng);
  EXPECT_EQ(s.last_auth(), "Bearer sekrit");
  ::unsetenv("MASTUNE_TEST_KEY");
}

TEST(HttpBackend, SkipTokenRejected) {
  HttpBackend be(fast("http://127.0.0.1:9/v1/chat"));
  Request q;
  q.m = skip_model();
  Rng rng(1);
  EXPECT_THROW(be.invoke(q.req(), rng), ValidationError);
}

TEST(HttpBackend, ConfigJson) {
  const HttpBackendConfig c = http_config_from_json(http_config_to_json(fast("http://x:1/p")));
  EXPECT_EQ(c.url, "http://x:1/p");
  EXPECT_EQ(c.backoff_ms, 1);
  EXPECT_THROW(http_config_from_json({{"retries", -1}}), ValidationError);
}
