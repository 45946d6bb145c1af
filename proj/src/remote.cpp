#include "httplib.h"

#include "embcap/remote.hpp"

#include <chrono>
#include <cstdlib>
#include <thread>

#include "json.hpp"

namespace embcap {

using nlohmann::json;

namespace {

struct SplitUrl {
  std::string origin;  // scheme://host[:port]
  std::string base;    // path prefix without trailing slash
};

SplitUrl split_url(const std::string& url) {
  const auto scheme = url.find("://");
  if (scheme == std::string::npos) throw ConfigError("endpoint URL lacks a scheme: " + url);
  const auto slash = url.find('/', scheme + 3);
  SplitUrl s;
  s.origin = url.substr(0, slash);
  s.base = slash == std::string::npos ? "" : url.substr(slash);
  while (!s.base.empty() && s.base.back() == '/') s.base.pop_back();
  return s;
}

json parse_reply(const std::string& body, std::string_view what) {
  try {
    return json::parse(body);
  } catch (const json::exception& e) {
    throw TransportError(std::string(what) + " returned malformed JSON: " + e.what());
  }
}

}  // namespace

std::optional<RemoteConfig> remote_from_env(const char* url_var, const char* token_var) {
  const char* url = std::getenv(url_var);
  if (!url || !*url) return std::nullopt;
  RemoteConfig cfg;
  cfg.url = url;
  if (const char* tok = token_var ? std::getenv(token_var) : nullptr) cfg.token = tok;
  return cfg;
}

std::string post_json(const RemoteConfig& cfg, const std::string& path, const std::string& body) {
  const SplitUrl u = split_url(cfg.url);
  httplib::Client cli(u.origin);
  const auto sec = static_cast<time_t>(cfg.timeout_s);
  const auto usec = static_cast<time_t>((cfg.timeout_s - static_cast<double>(sec)) * 1e6);
  cli.set_connection_timeout(sec, usec);
  cli.set_read_timeout(sec, usec);
  cli.set_write_timeout(sec, usec);
  httplib::Headers headers;
  if (!cfg.token.empty()) headers.emplace("Authorization", "Bearer " + cfg.token);

  std::string last_error;
  for (int attempt = 0; attempt <= std::max(0, cfg.retries); ++attempt) {
    if (attempt > 0) std::this_thread::sleep_for(std::chrono::milliseconds(cfg.backoff_ms << (attempt - 1)));
    auto res = cli.Post(u.base + path, headers, body, "application/json");
    if (!res) {
      last_error = "connection failed: " + httplib::to_string(res.error());
      continue;
    }
    if (res->status >= 200 && res->status < 300) return res->body;
    last_error = "HTTP " + std::to_string(res->status);
    if (res->status != 429 && res->status < 500) break;
  }
  throw TransportError(cfg.url + path + ": " + last_error);
}

LlmReply HttpLlmClient::complete(const LlmRequest& req) {
  const json body = {{"model", req.model.empty() ? model_ : req.model},
                     {"prompt", req.prompt},
                     {"temperature", req.temperature},
                     {"max_tokens", req.max_tokens}};
  const auto t0 = std::chrono::steady_clock::now();
  const std::string raw = post_json(cfg_, "", body.dump());
  const auto t1 = std::chrono::steady_clock::now();
  const json j = parse_reply(raw, "LLM endpoint");
  if (!j.is_object() || !j.contains("text") || !j["text"].is_string()) {
    throw TransportError("LLM endpoint reply has no \"text\" field");
  }
  LlmReply r;
  r.raw = j["text"].get<std::string>();
  r.latency_ms = std::chrono::duration<double, std::milli>(t1 - t0).count();
  if (j.contains("usage") && j["usage"].is_object()) {
    r.prompt_tokens = j["usage"].value("prompt_tokens", 0);
    r.completion_tokens = j["usage"].value("completion_tokens", 0);
  }
  return r;
}

CaptionRecord RemoteCaptioner::describe(const ObjectGT& object, double visible_fraction, Rng&) {
  const json body = {{"object_id", object.id},
                     {"category", std::string(category_name(object.category))},
                     {"attribute_tokens", object.attribute_tokens},
                     {"visible_fraction", visible_fraction}};
  const json j = parse_reply(post_json(cfg_, "/caption", body.dump()), "captioner");
  if (!j.is_object() || !j.contains("caption") || !j["caption"].is_string()) {
    throw TransportError("captioner reply has no \"caption\" field");
  }
  CaptionRecord rec;
  rec.object_id_gt = object.id;
  rec.visible_fraction = visible_fraction;
  rec.text = j["caption"].get<std::string>();
  return rec;
}

Embedding RemoteEmbedder::embed(std::string_view text) const {
  {
    std::lock_guard lock(mu_);
    auto it = cache_.find(text);
    if (it != cache_.end()) return it->second;
  }
  const json body = {{"text", std::string(text)}};
  const json j = parse_reply(post_json(cfg_, "/embed", body.dump()), "embedder");
  Embedding e;
  try {
    e.values = j.at("embedding").get<std::vector<double>>();
  } catch (const json::exception&) {
    throw TransportError("embedder reply has no numeric \"embedding\" array");
  }
  if (e.values.size() != dim_) {
    throw TransportError("embedder returned " + std::to_string(e.values.size()) + " values, expected " +
                         std::to_string(dim_));
  }
  std::lock_guard lock(mu_);
  cache_.emplace(std::string(text), e);
  return e;
}

}  // namespace embcap
