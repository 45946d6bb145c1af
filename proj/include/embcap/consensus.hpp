#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "embcap/perception.hpp"

namespace embcap {

// ---------------------------------------------------------------------------
// Preprocessing and tallies
// ---------------------------------------------------------------------------

std::vector<std::string> default_boilerplate();

/// Strips leading boilerplate (repeatedly, case-insensitive, on word
/// boundaries) and trailing periods, lowercases, collapses whitespace and
/// drops captions left empty.
std::vector<std::string> preprocess_captions(const std::vector<std::string>& caps,
                                             const std::vector<std::string>& boilerplate = default_boilerplate());

struct TallyEntry {
  int frequency = 0;
  std::string caption;

  friend bool operator==(const TallyEntry&, const TallyEntry&) = default;
};

/// Sorted by descending frequency, then lexicographically.
using CaptionTally = std::vector<TallyEntry>;

CaptionTally tally(const std::vector<std::string>& caps);

/// `[[f1, "c1"], [f2, "c2"]]` with JSON string escaping.
std::string serialize_tally(const CaptionTally& t);

/// Inverse of serialize_tally. Throws ParseError on malformed input.
CaptionTally parse_tally(std::string_view text);

// ---------------------------------------------------------------------------
// LLM prompting
// ---------------------------------------------------------------------------

/// Full LD-CPS prompt. With `object_class` set, an extra "Object class:" line
/// precedes the input block.
std::string build_ldcps_prompt(const CaptionTally& t,
                               const std::optional<std::string>& object_class = std::nullopt);

/// Summarization prompt for the IC3 baseline; captions listed verbatim, no
/// frequencies.
std::string build_ic3_prompt(const std::vector<std::string>& caps);

inline constexpr int kMaxPseudoCaptionWords = 20;

struct ParsedCaption {
  std::string text;
  bool truncated = false;
};

/// First non-empty <Caption>...</Caption> span, trimmed and cut to
/// `max_words`. Throws ParseError when there is none.
ParsedCaption parse_llm_reply(std::string_view raw, int max_words = kMaxPseudoCaptionWords);

struct LlmRequest {
  std::string model;
  std::string prompt;
  double temperature = 0.0;
  int max_tokens = 64;
};

struct LlmReply {
  std::string raw;
  double latency_ms = 0.0;
  int prompt_tokens = 0;
  int completion_tokens = 0;
};

class LlmClient {
 public:
  virtual ~LlmClient() = default;
  /// Throws TransportError once its own retry policy is exhausted.
  virtual LlmReply complete(const LlmRequest& req) = 0;
  virtual std::string model() const = 0;
};

// ---------------------------------------------------------------------------
// Consensus methods
// ---------------------------------------------------------------------------

enum class ConsensusMethod { LdcpsLlm, LdcpsMedoid, Eco, Ic3 };

std::string_view method_name(ConsensusMethod m);
ConsensusMethod method_from_name(std::string_view name);

struct Selection {
  std::string text;
  double score = 0.0;
};

/// Caption maximizing sum_i freq_i * cos(embed(c), embed(c_i)); ties go to
/// the higher frequency, then the lexicographically smaller caption.
Selection medoid_consensus(const CaptionTally& t, const Embedder& embedder);

class CiderScorer;

/// ECO: alpha * cos(embed(c), proxy) + (1 - alpha) * CIDEr of c against the
/// remaining captions. `scorer` supplies the document frequencies.
Selection eco_select(const std::vector<std::string>& caps, const Embedding& image_proxy,
                     const Embedder& embedder, const CiderScorer& scorer, double alpha = 0.5);

/// Offline IC3 stand-in: exact dedup, drop captions whose tokens form a
/// subsequence of another caption, join the rest with " and ".
std::string ic3_offline(const std::vector<std::string>& caps);

struct InstanceCaptions {
  int instance_id = 0;
  int object_id = -1;  // majority ground-truth object, for evaluation only
  int pseudo_label = 0;
  std::vector<CaptionRecord> captions;
  std::string proxy_text;  // ground-truth attribute tokens standing in for the image
};

struct PseudoCaption {
  int instance_id = 0;
  int object_id = -1;
  std::string text;
  std::string method;
  std::string source_model = "offline";
  bool fallback = false;
  bool truncated = false;
  std::string raw_reply;
  std::vector<std::uint64_t> caption_ids;
};

struct ConsensusConfig {
  ConsensusMethod method = ConsensusMethod::LdcpsMedoid;
  double eco_alpha = 0.5;
  bool include_object_class = false;
  int parse_retries = 1;
  int max_in_flight = 4;
  LlmRequest request_template;
  std::vector<std::string> boilerplate = default_boilerplate();
};

struct ConsensusResult {
  std::vector<PseudoCaption> captions;
  std::vector<std::string> skipped;  // one line per instance without captions
};

/// Runs the configured method on every instance. LLM methods fall back to
/// the medoid on transport or parse failure; `llm` may be null for offline
/// methods (ic3 then uses the offline summary).
ConsensusResult pseudo_caption_all(const std::vector<InstanceCaptions>& instances,
                                   const ConsensusConfig& cfg, LlmClient* llm, const Embedder& embedder);

}  // namespace embcap
