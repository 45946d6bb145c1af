#include "embcap/perception.hpp"

#include <algorithm>
#include <array>
#include <limits>
#include <numeric>

#include "embcap/lexicon.hpp"

namespace embcap {

double iou(const BBox& a, const BBox& b) {
  const BBox inter{std::max(a.x0, b.x0), std::max(a.y0, b.y0), std::min(a.x1, b.x1),
                   std::min(a.y1, b.y1)};
  const double i = inter.area();
  const double u = a.area() + b.area() - i;
  return u > 0.0 ? i / u : 0.0;
}

BBox expand_box(const BBox& b, int margin, int width, int height) {
  return {std::clamp(b.x0 - margin, 0, width), std::clamp(b.y0 - margin, 0, height),
          std::clamp(b.x1 + margin, 0, width), std::clamp(b.y1 + margin, 0, height)};
}

int Detection::label() const {
  if (logits.empty()) return -1;
  return static_cast<int>(std::max_element(logits.begin(), logits.end()) - logits.begin());
}

std::vector<int> Detection::mask_pixels() const {
  std::vector<int> px;
  for (std::size_t i = 0; i < mask.size(); ++i) {
    if (mask[i]) px.push_back(static_cast<int>(i));
  }
  return px;
}

namespace {

BBox tight_box(std::span<const int> pixels, int width) {
  BBox b{std::numeric_limits<int>::max(), std::numeric_limits<int>::max(), 0, 0};
  for (int p : pixels) {
    const int x = p % width, y = p / width;
    b.x0 = std::min(b.x0, x);
    b.y0 = std::min(b.y0, y);
    b.x1 = std::max(b.x1, x + 1);
    b.y1 = std::max(b.y1, y + 1);
  }
  return b;
}

}  // namespace

std::vector<Detection> detect(const Observation& obs, const Scene& scene,
                              const DetectorConfig& cfg, Rng& rng, std::uint64_t first_view_id) {
  std::vector<Detection> out;
  std::uint64_t view_id = first_view_id;
  for (const auto& frag : obs.visible_fragments) {
    if (static_cast<int>(frag.pixels.size()) < cfg.min_pixels) continue;
    const auto& obj = scene.objects().at(frag.object_id);
    const int truth = static_cast<int>(obj.category);

    // Fixed draw order keeps the stream aligned regardless of outcomes.
    const double u_mis = rng.uniform();
    const auto wrong = static_cast<int>(rng.uniform_index(kNumClasses - 1));
    const double jitter = (2.0 * rng.uniform() - 1.0) * cfg.confidence_jitter;
    int peak = truth;
    if (u_mis < cfg.misclass_rate) peak = wrong >= truth ? wrong + 1 : wrong;

    Detection d;
    d.view_id = view_id++;
    d.object_id_gt = frag.object_id;
    d.logits.resize(kNumClasses);
    for (int c = 0; c < kNumClasses; ++c) {
      d.logits[c] = cfg.logit_noise * rng.normal() + (c == peak ? cfg.logit_peak : 0.0);
    }
    // Noise must never dethrone the chosen peak.
    const double top = *std::max_element(d.logits.begin(), d.logits.end());
    if (d.logits[peak] < top) d.logits[peak] = top + 1e-3;

    d.visible_fraction = frag.visible_fraction;
    d.confidence = std::clamp(
        cfg.confidence_base + cfg.confidence_slope * frag.visible_fraction + jitter, 0.0, 1.0);
    d.mask.assign(static_cast<std::size_t>(obs.width) * obs.height, 0);
    for (int p : frag.pixels) d.mask[p] = 1;
    d.bbox = expand_box(tight_box(frag.pixels, obs.width), cfg.bbox_margin, obs.width, obs.height);
    out.push_back(std::move(d));
  }
  return out;
}

std::vector<Detection> nms(std::vector<Detection> dets, double iou_threshold) {
  std::vector<std::size_t> order(dets.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return dets[a].confidence > dets[b].confidence;
  });
  std::vector<std::uint8_t> keep(dets.size(), 0);
  std::vector<std::size_t> kept;
  for (std::size_t i : order) {
    bool suppressed = false;
    for (std::size_t k : kept) {
      if (iou(dets[i].bbox, dets[k].bbox) >= iou_threshold) {
        suppressed = true;
        break;
      }
    }
    if (!suppressed) {
      kept.push_back(i);
      keep[i] = 1;
    }
  }
  std::vector<Detection> out;
  for (std::size_t i = 0; i < dets.size(); ++i) {
    if (keep[i]) out.push_back(std::move(dets[i]));
  }
  return out;
}

std::vector<Detection> filter_detections(std::vector<Detection> dets, const FilterConfig& cfg,
                                         int width, int height) {
  const double min_area = cfg.min_area(width, height);
  std::erase_if(dets, [&](const Detection& d) {
    return d.confidence < cfg.min_confidence || d.bbox.area() < min_area;
  });
  return nms(std::move(dets), cfg.nms_iou);
}

std::vector<Detection> reproject_boxes(std::vector<Detection> dets, const Observation& obs,
                                       int margin) {
  std::vector<Detection> out;
  for (auto& d : dets) {
    std::vector<int> px;
    for (int p : d.mask_pixels()) {
      if (std::isfinite(obs.depth[p])) px.push_back(p);
    }
    if (px.empty()) continue;
    d.bbox = expand_box(tight_box(px, obs.width), margin, obs.width, obs.height);
    out.push_back(std::move(d));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Caption noise
// ---------------------------------------------------------------------------

double NoiseConfig::base_corruption() const {
  const double keep = (1.0 - std::clamp(p_attr_swap, 0.0, 1.0)) *
                      (1.0 - std::clamp(p_category_swap, 0.0, 1.0)) *
                      (1.0 - std::clamp(p_hallucinate, 0.0, 1.0)) *
                      (1.0 - std::clamp(p_drop_detail, 0.0, 1.0));
  return 1.0 - keep;
}

double NoiseConfig::effective_corruption(double visible_fraction, double difficulty) const {
  const double occl = 1.0 - std::clamp(visible_fraction, 0.0, 1.0);
  return std::clamp(
      base_corruption() + occlusion_boost * occl + difficulty_boost * std::clamp(difficulty, 0.0, 1.0), 0.0,
      1.0);
}

NoiseConfig NoiseConfig::zero() {
  NoiseConfig c;
  c.p_attr_swap = c.p_category_swap = c.p_hallucinate = c.p_drop_detail = 0.0;
  c.occlusion_boost = 0.0;
  c.difficulty_boost = 0.0;
  c.p_boilerplate = 0.0;
  return c;
}

NoiseConfig NoiseConfig::heterogeneous() {
  NoiseConfig c;
  c.p_attr_swap = 0.04;
  c.p_category_swap = 0.02;
  c.p_hallucinate = 0.04;
  c.p_drop_detail = 0.04;
  c.occlusion_boost = 0.2;
  c.difficulty_boost = 0.8;
  return c;
}

std::map<std::string, std::vector<std::string>> NoiseConfig::default_synonyms() {
  std::map<std::string, std::vector<std::string>> table;
  const auto colors = lexicon::colors();
  for (auto c : colors) {
    auto& alts = table[std::string(c)];
    for (auto o : colors) {
      if (o != c) alts.emplace_back(o);
    }
  }
  const auto mats = lexicon::all_materials();
  for (auto m : mats) {
    auto& alts = table[std::string(m)];
    for (auto o : mats) {
      if (o != m) alts.emplace_back(o);
    }
  }
  return table;
}

namespace {

// Replaces the first whole-word occurrence of `from` in `text`.
bool replace_word(std::string& text, std::string_view from, std::string_view to) {
  std::size_t pos = 0;
  while ((pos = text.find(from, pos)) != std::string::npos) {
    const bool left = pos == 0 || text[pos - 1] == ' ';
    const std::size_t end = pos + from.size();
    const bool right = end == text.size() || text[end] == ' ';
    if (left && right) {
      text.replace(pos, from.size(), to);
      return true;
    }
    pos = end;
  }
  return false;
}

bool remove_phrase(std::string& text, std::string_view phrase) {
  if (phrase.empty()) return false;
  const std::string needle = " " + std::string(phrase);
  const auto pos = text.find(needle);
  if (pos == std::string::npos) return false;
  text.erase(pos, needle.size());
  return true;
}

enum Corruption { kAttrSwap = 0, kCategorySwap, kHallucinate, kDropDetail, kNumCorruptions };

}  // namespace

CaptionRecord caption(const ObjectGT& object, double visible_fraction, const NoiseConfig& cfg,
                      Rng& rng) {
  CaptionRecord rec;
  rec.object_id_gt = object.id;
  rec.visible_fraction = visible_fraction;
  std::string text = collapse_whitespace(to_lower(object.gt_caption));

  // Every call consumes the same number of gate draws.
  const double u_gate = rng.uniform();
  std::array<double, kNumCorruptions> u_type{};
  for (auto& u : u_type) u = rng.uniform();
  const double u_pick = rng.uniform();
  const double u_prefix = rng.uniform();
  const double u_prefix_which = rng.uniform();

  const std::array<double, kNumCorruptions> p{
      std::clamp(cfg.p_attr_swap, 0.0, 1.0), std::clamp(cfg.p_category_swap, 0.0, 1.0),
      std::clamp(cfg.p_hallucinate, 0.0, 1.0), std::clamp(cfg.p_drop_detail, 0.0, 1.0)};
  const double base = cfg.base_corruption();
  const bool corrupt = u_gate < cfg.effective_corruption(visible_fraction, object.difficulty);

  if (corrupt) {
    std::array<bool, kNumCorruptions> chosen{};
    bool any = false;
    for (int k = 0; k < kNumCorruptions; ++k) {
      chosen[k] = base > 0.0 && u_type[k] < p[k] / base;
      any = any || chosen[k];
    }
    if (!any) {
      // The occlusion boost fired alone: pick one corruption, weighted by p.
      double total = std::accumulate(p.begin(), p.end(), 0.0);
      std::array<double, kNumCorruptions> w = p;
      if (total <= 0.0) {
        w.fill(1.0);
        total = kNumCorruptions;
      }
      double acc = 0.0;
      int which = kNumCorruptions - 1;
      for (int k = 0; k < kNumCorruptions; ++k) {
        acc += w[k] / total;
        if (u_pick < acc) {
          which = k;
          break;
        }
      }
      chosen[which] = true;
    }

    const std::string before = text;
    if (chosen[kAttrSwap]) {
      std::vector<std::pair<std::string, const std::vector<std::string>*>> swappable;
      for (const auto& tok : object.attribute_tokens) {
        auto it = cfg.synonym_table.find(tok);
        if (it != cfg.synonym_table.end() && !it->second.empty()) swappable.emplace_back(tok, &it->second);
      }
      if (!swappable.empty()) {
        const auto& [tok, alts] = swappable[rng.uniform_index(swappable.size())];
        replace_word(text, tok, (*alts)[rng.uniform_index(alts->size())]);
      }
    }
    if (chosen[kCategorySwap]) {
      const int truth = static_cast<int>(object.category);
      auto other = static_cast<int>(rng.uniform_index(kNumClasses - 1));
      if (other >= truth) ++other;
      replace_word(text, category_name(object.category), category_name(static_cast<Category>(other)));
    }
    if (chosen[kDropDetail]) {
      bool dropped = false;
      if (object.attribute_tokens.size() >= 3) {
        dropped = remove_phrase(text, lexicon::context_phrase_for(object.attribute_tokens[2]));
      }
      if (!dropped && object.attribute_tokens.size() >= 2) {
        remove_phrase(text, object.attribute_tokens[1]);
      }
    }
    if (chosen[kHallucinate]) {
      const auto nouns = lexicon::hallucinations();
      text += " with a " + std::string(nouns[rng.uniform_index(nouns.size())]) + " on it";
    }
    rec.corrupted = text != before;
    if (!rec.corrupted) {
      // Caption had nothing the chosen corruption could touch.
      const auto nouns = lexicon::hallucinations();
      text += " with a " + std::string(nouns[rng.uniform_index(nouns.size())]) + " on it";
      rec.corrupted = true;
    }
  }

  if (u_prefix < std::clamp(cfg.p_boilerplate, 0.0, 1.0)) {
    const auto prefixes = lexicon::boilerplate_prefixes();
    const auto idx = std::min<std::size_t>(prefixes.size() - 1,
                                           static_cast<std::size_t>(u_prefix_which * prefixes.size()));
    text = std::string(prefixes[idx]) + " " + text;
  }
  rec.text = text;
  return rec;
}

// ---------------------------------------------------------------------------
// Embedding
// ---------------------------------------------------------------------------

bool Embedding::is_zero() const {
  return std::all_of(values.begin(), values.end(), [](double v) { return v == 0.0; });
}

double cosine(const Embedding& a, const Embedding& b) {
  if (a.values.size() != b.values.size()) throw ContractError("cosine: dimension mismatch");
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.values.size(); ++i) {
    dot += a.values[i] * b.values[i];
    na += a.values[i] * a.values[i];
    nb += b.values[i] * b.values[i];
  }
  if (na == 0.0 || nb == 0.0) return 0.0;
  return dot / (std::sqrt(na) * std::sqrt(nb));
}

std::size_t HashingEmbedder::unigram_bucket(std::string_view token) const {
  return static_cast<std::size_t>(fnv1a64(token) % dim_);
}

std::size_t HashingEmbedder::bigram_bucket(std::string_view first, std::string_view second) const {
  std::string key(first);
  key.push_back(' ');
  key.append(second);
  return static_cast<std::size_t>(fnv1a64(key) % dim_);
}

Embedding HashingEmbedder::embed(std::string_view text) const {
  Embedding e;
  e.values.assign(dim_, 0.0);
  const auto toks = tokenize(text);
  for (const auto& t : toks) e.values[unigram_bucket(t)] += 1.0;
  for (std::size_t i = 0; i + 1 < toks.size(); ++i) e.values[bigram_bucket(toks[i], toks[i + 1])] += 0.5;
  double n2 = 0.0;
  for (double v : e.values) n2 += v * v;
  if (n2 > 0.0) {
    const double inv = 1.0 / std::sqrt(n2);
    for (double& v : e.values) v *= inv;
  }
  return e;
}

}  // namespace embcap
