#pragma once

#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>

#include "embcap/consensus.hpp"
#include "embcap/perception.hpp"

// HTTP clients for real models behind the captioner, embedder and LLM
// interfaces. Bodies are JSON over POST; see README for the contract.
namespace embcap {

struct RemoteConfig {
  std::string url;    // scheme://host[:port][/base]
  std::string token;  // sent as "Authorization: Bearer <token>" when set
  double timeout_s = 30.0;
  int retries = 2;
  int backoff_ms = 200;
};

inline constexpr const char* kEnvLlmUrl = "EMBCAP_LLM_URL";
inline constexpr const char* kEnvLlmKey = "EMBCAP_LLM_KEY";
inline constexpr const char* kEnvCaptionerUrl = "EMBCAP_CAPTIONER_URL";
inline constexpr const char* kEnvEmbedderUrl = "EMBCAP_EMBEDDER_URL";
inline constexpr const char* kEnvApiToken = "EMBCAP_API_TOKEN";

/// Endpoint settings from the environment; empty when `url_var` is unset.
std::optional<RemoteConfig> remote_from_env(const char* url_var, const char* token_var);

/// POSTs `body` to `path` under the configured base URL and returns the
/// response body. Connection errors, 429 and 5xx are retried with doubling
/// backoff; other non-2xx statuses fail at once. Throws TransportError.
std::string post_json(const RemoteConfig& cfg, const std::string& path, const std::string& body);

/// {"model", "prompt", "temperature", "max_tokens"} -> {"text", "usage": {...}}
class HttpLlmClient final : public LlmClient {
 public:
  HttpLlmClient(RemoteConfig cfg, std::string model) : cfg_(std::move(cfg)), model_(std::move(model)) {}
  LlmReply complete(const LlmRequest& req) override;
  std::string model() const override { return model_; }

 private:
  RemoteConfig cfg_;
  std::string model_;
};

/// /caption: {"object_id", "category", "attribute_tokens", "visible_fraction"} -> {"caption"}
class RemoteCaptioner final : public Captioner {
 public:
  explicit RemoteCaptioner(RemoteConfig cfg) : cfg_(std::move(cfg)) {}
  CaptionRecord describe(const ObjectGT& object, double visible_fraction, Rng& rng) override;

 private:
  RemoteConfig cfg_;
};

/// /embed: {"text"} -> {"embedding": [...]}. Responses are cached per text.
class RemoteEmbedder final : public Embedder {
 public:
  RemoteEmbedder(RemoteConfig cfg, std::size_t dim) : cfg_(std::move(cfg)), dim_(dim) {}
  Embedding embed(std::string_view text) const override;
  std::size_t dim() const override { return dim_; }

 private:
  RemoteConfig cfg_;
  std::size_t dim_;
  mutable std::mutex mu_;
  mutable std::map<std::string, Embedding, std::less<>> cache_;
};

}  // namespace embcap
