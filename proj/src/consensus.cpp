#include "embcap/consensus.hpp"

#include <algorithm>
#include <future>
#include <set>

#include "json.hpp"

#include "embcap/lexicon.hpp"
#include "embcap/metrics.hpp"

namespace embcap {

namespace {

constexpr std::string_view kLdcpsHeader =
    "You are an advanced language model tasked with generating a \n"
    "concise and accurate caption for an object. You are given a list of \n"
    "captions along with their frequencies. Each caption may \n"
    "represent a different viewpoint and might not always be accurate. \n"
    "Additionally, you are provided with the correct object class to \n"
    "describe. Your goal is to generate a single, coherent caption that \n"
    "accurately describes the main object, based on the provided \n"
    "information. The generated caption should not exceed 20 words \n"
    "and must be encapsulated within <Caption> ... </Caption> \n"
    "tags.\n"
    "Here is the format of the input you will receive:\n"
    "[[frequency, \"caption\"]]\n"
    "\n"
    "Example Input:\n"
    "[[5, \"A red apple on a table\"], [3, \"A shiny red apple\"], [1, \"A red fruit\"], [2, \"A red apple\"]]\n"
    "Example Output:\n"
    "<Caption>A shiny red apple on a table</Caption>\n"
    "Example Input:\n"
    "[[8, \"A small brown dog\"], [3, \"A dog\"], [4, \"A small dog\"], [1, \"A brown animal\"]]\n"
    "Example Output:\n"
    "<Caption>A small brown dog</Caption>\n"
    "Example Input:\n"
    "[[6, \"A blue car parked on the street\"], [4, \"A car\"], [2, \"A blue vehicle\"], [1, \"A car on the street\"]]\n"
    "Example Output:\n"
    "<Caption>A blue car parked on the street</Caption>\n"
    "Example Input:\n"
    "[[7, \"A cat sitting on a windowsill\"], [5, \"A windowsill cat\"], [2, \"A cat\"], [1, \"A windowsill\"]]\n"
    "Example Output:\n"
    "<Caption>A cat sitting on a windowsill</Caption>\n"
    "Example Input:\n"
    "[[5, \"A wooden table with a plate on it\"], [2, \"A table with a plate and a couch in the room\"], \n"
    "[3, \"A wooden table\"], [1, \"A plate on a wooden table\"]]\n"
    "Example Output:\n"
    "<Caption>A wooden table with a plate on it</Caption>\n"
    "\n"
    "Your Task:\n"
    "1. Analyze the provided list of captions and their frequencies.\n"
    "2. Synthesize an accurate caption that reflects the most reliable and frequent details.\n"
    "3. Ensure the generated caption describes only the main objects and mentions other objects only in relation to the main object.\n"
    "4. Ensure the generated caption is no longer than 20 words.\n"
    "5. Encapsulate your generated caption within <Caption> ... </Caption> tags.\n"
    "\n";

constexpr std::string_view kIc3Header =
    "Below are several descriptions of the same object, each written from a different "
    "viewpoint. Some of them may be wrong. Discard the descriptions that are likely "
    "incorrect and combine the rest into a single, more detailed description of the "
    "object. Reply with the description enclosed in <Caption> ... </Caption> tags.\n"
    "\n"
    "Descriptions:\n";

std::string strip_trailing_periods(std::string s) {
  while (!s.empty() && (s.back() == '.' || s.back() == ' ')) s.pop_back();
  return s;
}

bool is_subsequence(const std::vector<std::string>& small, const std::vector<std::string>& big) {
  std::size_t i = 0;
  for (std::size_t j = 0; j < big.size() && i < small.size(); ++j) {
    if (small[i] == big[j]) ++i;
  }
  return i == small.size();
}

}  // namespace

std::vector<std::string> default_boilerplate() {
  std::vector<std::string> out;
  for (auto p : lexicon::boilerplate_prefixes()) out.emplace_back(p);
  return out;
}

std::vector<std::string> preprocess_captions(const std::vector<std::string>& caps,
                                             const std::vector<std::string>& boilerplate) {
  std::vector<std::string> out;
  for (const auto& raw : caps) {
    std::string s = collapse_whitespace(to_lower(raw));
    bool stripped = true;
    while (stripped) {
      stripped = false;
      for (const auto& bp : boilerplate) {
        const std::string p = to_lower(bp);
        if (p.empty() || !s.starts_with(p)) continue;
        if (s.size() > p.size() && s[p.size()] != ' ') continue;
        s = collapse_whitespace(s.substr(p.size()));
        stripped = true;
      }
    }
    s = collapse_whitespace(strip_trailing_periods(s));
    if (!s.empty()) out.push_back(std::move(s));
  }
  return out;
}

CaptionTally tally(const std::vector<std::string>& caps) {
  std::map<std::string, int> counts;
  for (const auto& c : caps) ++counts[c];
  CaptionTally t;
  for (const auto& [c, f] : counts) t.push_back({f, c});
  std::stable_sort(t.begin(), t.end(),
                   [](const TallyEntry& a, const TallyEntry& b) { return a.frequency > b.frequency; });
  return t;
}

std::string serialize_tally(const CaptionTally& t) {
  std::string out = "[";
  for (std::size_t i = 0; i < t.size(); ++i) {
    if (i) out += ", ";
    out += "[" + std::to_string(t[i].frequency) + ", " + nlohmann::json(t[i].caption).dump() + "]";
  }
  return out + "]";
}

CaptionTally parse_tally(std::string_view text) {
  CaptionTally t;
  try {
    const auto j = nlohmann::json::parse(text);
    if (!j.is_array()) throw ParseError("tally is not a list");
    for (const auto& e : j) {
      if (!e.is_array() || e.size() != 2 || !e[0].is_number_integer() || !e[1].is_string()) {
        throw ParseError("tally entry is not [frequency, caption]");
      }
      t.push_back({e[0].get<int>(), e[1].get<std::string>()});
    }
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("malformed tally: ") + e.what());
  }
  return t;
}

std::string build_ldcps_prompt(const CaptionTally& t, const std::optional<std::string>& object_class) {
  if (t.empty()) throw ContractError("cannot build a prompt from an empty tally");
  std::string out(kLdcpsHeader);
  if (object_class) out += "Object class: " + *object_class + "\n\n";
  out += "Input:\n";
  out += serialize_tally(t);
  out += "\n\nOutput:";
  return out;
}

std::string build_ic3_prompt(const std::vector<std::string>& caps) {
  if (caps.empty()) throw ContractError("cannot build a prompt without captions");
  std::string out(kIc3Header);
  for (const auto& c : caps) out += "- " + c + "\n";
  out += "\nOutput:";
  return out;
}

ParsedCaption parse_llm_reply(std::string_view raw, int max_words) {
  constexpr std::string_view kOpen = "<Caption>", kClose = "</Caption>";
  std::size_t from = 0;
  while (true) {
    const auto open = raw.find(kOpen, from);
    if (open == std::string_view::npos) break;
    const auto body = open + kOpen.size();
    const auto close = raw.find(kClose, body);
    if (close == std::string_view::npos) break;
    // A nested opening tag means this span is malformed; resume there.
    const auto inner = raw.substr(body, close - body);
    const auto nested = inner.find(kOpen);
    if (nested != std::string_view::npos) {
      from = body + nested;
      continue;
    }
    std::string text = collapse_whitespace(inner);
    if (text.empty()) {
      from = close + kClose.size();
      continue;
    }
    ParsedCaption out;
    std::vector<std::string> words;
    std::size_t pos = 0;
    while (pos < text.size()) {
      auto sp = text.find(' ', pos);
      if (sp == std::string::npos) sp = text.size();
      words.push_back(text.substr(pos, sp - pos));
      pos = sp + 1;
    }
    if (static_cast<int>(words.size()) > max_words) {
      words.resize(max_words);
      out.truncated = true;
    }
    out.text = join(words, " ");
    return out;
  }
  throw ParseError("reply has no <Caption>...</Caption> span");
}

std::string_view method_name(ConsensusMethod m) {
  switch (m) {
    case ConsensusMethod::LdcpsLlm: return "ldcps-llm";
    case ConsensusMethod::LdcpsMedoid: return "ldcps-medoid";
    case ConsensusMethod::Eco: return "eco";
    case ConsensusMethod::Ic3: return "ic3";
  }
  return "unknown";
}

ConsensusMethod method_from_name(std::string_view name) {
  if (name == "ldcps" || name == "ldcps-llm") return ConsensusMethod::LdcpsLlm;
  if (name == "ldcps-offline" || name == "ldcps-medoid" || name == "medoid") return ConsensusMethod::LdcpsMedoid;
  if (name == "eco") return ConsensusMethod::Eco;
  if (name == "ic3") return ConsensusMethod::Ic3;
  throw ConfigError("unknown consensus method: " + std::string(name));
}

Selection medoid_consensus(const CaptionTally& t, const Embedder& embedder) {
  if (t.empty()) throw ContractError("medoid of an empty tally");
  std::vector<Embedding> es;
  es.reserve(t.size());
  for (const auto& e : t) es.push_back(embedder.embed(e.caption));
  std::optional<std::size_t> best;
  double best_score = 0.0;
  for (std::size_t i = 0; i < t.size(); ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < t.size(); ++j) {
      s += t[j].frequency * (i == j && !es[i].is_zero() ? 1.0 : cosine(es[i], es[j]));
    }
    const bool better =
        !best || s > best_score ||
        (s == best_score && (t[i].frequency > t[*best].frequency ||
                             (t[i].frequency == t[*best].frequency && t[i].caption < t[*best].caption)));
    if (better) {
      best = i;
      best_score = s;
    }
  }
  return {t[*best].caption, best_score};
}

Selection eco_select(const std::vector<std::string>& caps, const Embedding& image_proxy,
                     const Embedder& embedder, const CiderScorer& scorer, double alpha) {
  if (caps.empty()) throw ContractError("eco_select needs at least one caption");
  if (alpha < 0.0 || alpha > 1.0) throw ContractError("eco alpha must lie in [0, 1]");
  if (caps.size() == 1) return {caps.front(), 0.0};
  // Candidates in tally order so ties resolve to the more frequent caption.
  const CaptionTally t = tally(caps);
  std::optional<Selection> best;
  for (const auto& e : t) {
    std::vector<std::string> others;
    bool skipped = false;
    for (const auto& c : caps) {
      if (!skipped && c == e.caption) {
        skipped = true;
        continue;
      }
      others.push_back(c);
    }
    const double align = cosine(embedder.embed(e.caption), image_proxy);
    const double consensus = scorer.score(e.caption, others);
    const double s = alpha * align + (1.0 - alpha) * consensus;
    if (!best || s > best->score) best = Selection{e.caption, s};
  }
  return *best;
}

std::string ic3_offline(const std::vector<std::string>& caps) {
  if (caps.empty()) throw ContractError("ic3 needs at least one caption");
  std::vector<std::string> uniq;
  for (const auto& c : caps) {
    if (std::find(uniq.begin(), uniq.end(), c) == uniq.end()) uniq.push_back(c);
  }
  std::vector<std::vector<std::string>> toks;
  for (const auto& c : uniq) toks.push_back(tokenize(c));
  std::vector<std::string> kept;
  for (std::size_t i = 0; i < uniq.size(); ++i) {
    bool contained = false;
    for (std::size_t j = 0; j < uniq.size() && !contained; ++j) {
      if (i == j || !is_subsequence(toks[i], toks[j])) continue;
      // Equal token sequences: keep only the first spelling.
      contained = toks[i].size() < toks[j].size() || j < i;
    }
    if (!contained) kept.push_back(uniq[i]);
  }
  return join(kept, " and ");
}

namespace {

PseudoCaption medoid_caption(const CaptionTally& t, const Embedder& embedder) {
  PseudoCaption pc;
  pc.text = medoid_consensus(t, embedder).text;
  pc.method = std::string(method_name(ConsensusMethod::LdcpsMedoid));
  return pc;
}

PseudoCaption run_llm(const InstanceCaptions& inst, const std::vector<std::string>& caps,
                      const CaptionTally& t, const ConsensusConfig& cfg, LlmClient& llm,
                      const Embedder& embedder) {
  LlmRequest req = cfg.request_template;
  if (req.model.empty()) req.model = llm.model();
  const bool ldcps = cfg.method == ConsensusMethod::LdcpsLlm;
  if (ldcps) {
    std::optional<std::string> cls;
    if (cfg.include_object_class) cls = std::string(category_name(static_cast<Category>(inst.pseudo_label)));
    req.prompt = build_ldcps_prompt(t, cls);
  } else {
    req.prompt = build_ic3_prompt(caps);
  }
  PseudoCaption pc;
  pc.method = std::string(method_name(cfg.method));
  pc.source_model = req.model;
  std::string last_raw;
  for (int attempt = 0; attempt <= std::max(0, cfg.parse_retries); ++attempt) {
    try {
      const LlmReply reply = llm.complete(req);
      last_raw = reply.raw;
      const ParsedCaption parsed = parse_llm_reply(reply.raw);
      pc.text = parsed.text;
      pc.truncated = parsed.truncated;
      pc.raw_reply = reply.raw;
      return pc;
    } catch (const ParseError&) {
      continue;
    } catch (const TransportError&) {
      break;
    }
  }
  PseudoCaption fb;
  if (ldcps) {
    fb = medoid_caption(t, embedder);
  } else {
    fb.method = std::string(method_name(ConsensusMethod::Ic3));
    fb.text = ic3_offline(caps);
  }
  fb.fallback = true;
  fb.raw_reply = last_raw;
  return fb;
}

}  // namespace

ConsensusResult pseudo_caption_all(const std::vector<InstanceCaptions>& instances,
                                   const ConsensusConfig& cfg, LlmClient* llm, const Embedder& embedder) {
  ConsensusResult result;
  std::vector<const InstanceCaptions*> todo;
  std::vector<std::vector<std::string>> prepared;
  for (const auto& inst : instances) {
    std::vector<std::string> raw;
    for (const auto& c : inst.captions) raw.push_back(c.text);
    auto caps = preprocess_captions(raw, cfg.boilerplate);
    if (caps.empty()) {
      result.skipped.push_back("instance " + std::to_string(inst.instance_id) + ": no usable captions");
      continue;
    }
    todo.push_back(&inst);
    prepared.push_back(std::move(caps));
  }

  std::optional<CiderScorer> scorer;
  if (cfg.method == ConsensusMethod::Eco && prepared.size() >= 2) scorer.emplace(prepared);

  std::vector<PseudoCaption> out(todo.size());
  auto solve = [&](std::size_t i) {
    const auto& inst = *todo[i];
    const auto& caps = prepared[i];
    const CaptionTally t = tally(caps);
    PseudoCaption pc;
    switch (cfg.method) {
      case ConsensusMethod::LdcpsMedoid:
        pc = medoid_caption(t, embedder);
        break;
      case ConsensusMethod::LdcpsLlm:
        if (llm) {
          pc = run_llm(inst, caps, t, cfg, *llm, embedder);
        } else {
          pc = medoid_caption(t, embedder);
          pc.fallback = true;
        }
        break;
      case ConsensusMethod::Eco: {
        pc.method = std::string(method_name(cfg.method));
        if (scorer) {
          pc.text = eco_select(caps, embedder.embed(inst.proxy_text), embedder, *scorer, cfg.eco_alpha).text;
        } else {
          // A single instance gives no document frequencies; alignment alone decides.
          const Embedding proxy = embedder.embed(inst.proxy_text);
          double best = -1.0;
          for (const auto& e : t) {
            const double s = cosine(embedder.embed(e.caption), proxy);
            if (s > best) {
              best = s;
              pc.text = e.caption;
            }
          }
        }
        break;
      }
      case ConsensusMethod::Ic3:
        if (llm) {
          pc = run_llm(inst, caps, t, cfg, *llm, embedder);
        } else {
          pc.method = std::string(method_name(cfg.method));
          pc.text = ic3_offline(caps);
        }
        break;
    }
    pc.instance_id = inst.instance_id;
    pc.object_id = inst.object_id;
    for (const auto& c : inst.captions) pc.caption_ids.push_back(c.id);
    out[i] = std::move(pc);
  };

  const bool remote = llm != nullptr &&
                      (cfg.method == ConsensusMethod::LdcpsLlm || cfg.method == ConsensusMethod::Ic3);
  const std::size_t width = remote ? static_cast<std::size_t>(std::max(1, cfg.max_in_flight)) : 1;
  for (std::size_t start = 0; start < todo.size(); start += width) {
    const std::size_t stop = std::min(todo.size(), start + width);
    if (width == 1) {
      solve(start);
      continue;
    }
    std::vector<std::future<void>> jobs;
    for (std::size_t i = start; i < stop; ++i) jobs.push_back(std::async(std::launch::async, solve, i));
    for (auto& j : jobs) j.get();
  }
  result.captions = std::move(out);
  return result;
}

}  // namespace embcap
