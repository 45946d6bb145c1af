#include <atomic>
#include <thread>

#include "httplib.h"

#include "doctest.h"
#include "embcap/consensus.hpp"
#include "embcap/remote.hpp"
#include "json.hpp"

using namespace embcap;
using nlohmann::json;

namespace {

// Local HTTP server on a free port, stopped on destruction.
class Server {
 public:
  Server() {
    port_ = svr.bind_to_any_port("127.0.0.1");
    thread_ = std::thread([this] { svr.listen_after_bind(); });
    svr.wait_until_ready();
  }
  ~Server() {
    svr.stop();
    thread_.join();
  }
  std::string url(const std::string& base = "") const { return "http://127.0.0.1:" + std::to_string(port_) + base; }
  httplib::Server svr;

 private:
  int port_ = 0;
  std::thread thread_;
};

RemoteConfig fast(const std::string& url) {
  RemoteConfig c;
  c.url = url;
  c.timeout_s = 2.0;
  c.retries = 2;
  c.backoff_ms = 1;
  return c;
}

}  // namespace

TEST_CASE("llm client sends the documented body and bearer token") {
  Server s;
  json seen;
  std::string auth;
  s.svr.Post("/v1/complete", [&](const httplib::Request& req, httplib::Response& res) {
    seen = json::parse(req.body);
    auth = req.get_header_value("Authorization");
    res.set_content(R"({"text": "<Caption>a red couch</Caption>", "usage": {"prompt_tokens": 12, "completion_tokens": 5}})",
                    "application/json");
  });
  auto cfg = fast(s.url("/v1/complete"));
  cfg.token = "secret";
  HttpLlmClient llm(cfg, "m1");
  LlmRequest req;
  req.prompt = "hello";
  req.max_tokens = 32;
  const auto r = llm.complete(req);
  CHECK(r.raw == "<Caption>a red couch</Caption>");
  CHECK(r.prompt_tokens == 12);
  CHECK(r.completion_tokens == 5);
  CHECK(seen["model"] == "m1");
  CHECK(seen["prompt"] == "hello");
  CHECK(seen["temperature"] == 0.0);
  CHECK(seen["max_tokens"] == 32);
  CHECK(auth == "Bearer secret");
}

TEST_CASE("transient failures are retried, client errors are not") {
  Server s;
  std::atomic<int> flaky{0}, bad{0};
  s.svr.Post("/flaky", [&](const httplib::Request&, httplib::Response& res) {
    if (flaky++ < 2) {
      res.status = 503;
      return;
    }
    res.set_content(R"({"ok": true})", "application/json");
  });
  s.svr.Post("/bad", [&](const httplib::Request&, httplib::Response& res) {
    ++bad;
    res.status = 400;
  });
  CHECK(post_json(fast(s.url()), "/flaky", "{}") == R"({"ok": true})");
  CHECK(flaky == 3);
  CHECK_THROWS_AS(post_json(fast(s.url()), "/bad", "{}"), TransportError);
  CHECK(bad == 1);
  CHECK_THROWS_AS(post_json(fast("localhost:1"), "/x", "{}"), ConfigError);
}

TEST_CASE("captioner and embedder clients") {
  Server s;
  std::atomic<int> embeds{0};
  s.svr.Post("/caption", [&](const httplib::Request& req, httplib::Response& res) {
    const auto j = json::parse(req.body);
    res.set_content(json{{"caption", "a " + j["category"].get<std::string>()}}.dump(), "application/json");
  });
  s.svr.Post("/embed", [&](const httplib::Request& req, httplib::Response& res) {
    ++embeds;
    const auto j = json::parse(req.body);
    const double n = static_cast<double>(j["text"].get<std::string>().size());
    res.set_content(json{{"embedding", {n, 1.0, 0.0}}}.dump(), "application/json");
  });
  RemoteCaptioner cap(fast(s.url()));
  ObjectGT o;
  o.id = 3;
  o.category = Category::Bed;
  Rng rng(1);
  const auto rec = cap.describe(o, 0.7, rng);
  CHECK(rec.text == "a bed");
  CHECK(rec.object_id_gt == 3);
  CHECK(rec.visible_fraction == 0.7);

  RemoteEmbedder emb(fast(s.url()), 3);
  CHECK(emb.embed("abcd").values == std::vector<double>{4.0, 1.0, 0.0});
  emb.embed("abcd");
  CHECK(embeds == 1);
  RemoteEmbedder wrong(fast(s.url()), 5);
  CHECK_THROWS_AS(wrong.embed("x"), TransportError);
}

TEST_CASE("unreachable llm makes every pseudo-caption a flagged fallback") {
  int port = 0;
  {
    Server s;  // grab a free port, then close it
    port = std::stoi(s.url().substr(s.url().rfind(':') + 1));
  }
  auto cfg = fast("http://127.0.0.1:" + std::to_string(port));
  cfg.retries = 1;
  HttpLlmClient llm(cfg, "m");
  std::vector<InstanceCaptions> insts(3);
  for (int i = 0; i < 3; ++i) {
    insts[i].instance_id = i;
    CaptionRecord c;
    c.id = static_cast<std::uint64_t>(i);
    c.text = "a red couch";
    insts[i].captions = {c, c};
  }
  ConsensusConfig cc;
  cc.method = ConsensusMethod::LdcpsLlm;
  const HashingEmbedder e;
  const auto r = pseudo_caption_all(insts, cc, &llm, e);
  REQUIRE(r.captions.size() == 3);
  for (const auto& pc : r.captions) {
    CHECK(pc.fallback);
    CHECK(pc.text == "a red couch");
  }
}

TEST_CASE("endpoint settings from the environment") {
  ::unsetenv("EMBCAP_TEST_URL");
  CHECK_FALSE(remote_from_env("EMBCAP_TEST_URL", nullptr));
  ::setenv("EMBCAP_TEST_URL", "http://h:1", 1);
  ::setenv("EMBCAP_TEST_KEY", "k", 1);
  const auto c = remote_from_env("EMBCAP_TEST_URL", "EMBCAP_TEST_KEY");
  REQUIRE(c);
  CHECK(c->url == "http://h:1");
  CHECK(c->token == "k");
}
