#include "embcap/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <set>

namespace embcap {

namespace {

using Tokens = std::vector<std::string>;
using Counts = std::map<std::string, int>;

Counts ngram_counts(const Tokens& toks, int n) {
  Counts out;
  for (std::size_t i = 0; i + n <= toks.size(); ++i) {
    std::string g = toks[i];
    for (int k = 1; k < n; ++k) g += ' ' + toks[i + k];
    ++out[g];
  }
  return out;
}

}  // namespace

double bleu4(std::string_view pred, const std::vector<std::string>& refs) {
  const Tokens p = tokenize(pred);
  if (p.empty() || refs.empty()) return 0.0;
  std::vector<Tokens> r;
  for (const auto& s : refs) r.push_back(tokenize(s));

  double log_sum = 0.0;
  for (int n = 1; n <= 4; ++n) {
    const Counts pc = ngram_counts(p, n);
    Counts max_ref;
    for (const auto& toks : r) {
      for (const auto& [g, c] : ngram_counts(toks, n)) max_ref[g] = std::max(max_ref[g], c);
    }
    double clipped = 0.0, total = 0.0;
    for (const auto& [g, c] : pc) {
      total += c;
      auto it = max_ref.find(g);
      if (it != max_ref.end()) clipped += std::min(c, it->second);
    }
    log_sum += std::log(std::max(clipped, kBleuEpsilon) / std::max(total, 1.0));
  }

  const auto c = static_cast<double>(p.size());
  double closest = static_cast<double>(r.front().size());
  for (const auto& toks : r) {
    const auto len = static_cast<double>(toks.size());
    const double d = std::abs(len - c), best = std::abs(closest - c);
    if (d < best || (d == best && len < closest)) closest = len;
  }
  const double bp = c > closest ? 1.0 : std::exp(1.0 - closest / c);
  return 100.0 * bp * std::exp(log_sum / 4.0);
}

std::size_t lcs_length(const std::vector<std::string>& a, const std::vector<std::string>& b) {
  std::vector<std::size_t> prev(b.size() + 1, 0), cur(b.size() + 1, 0);
  for (std::size_t i = 1; i <= a.size(); ++i) {
    for (std::size_t j = 1; j <= b.size(); ++j) {
      cur[j] = a[i - 1] == b[j - 1] ? prev[j - 1] + 1 : std::max(prev[j], cur[j - 1]);
    }
    std::swap(prev, cur);
  }
  return prev[b.size()];
}

double rouge_l(std::string_view pred, std::string_view ref) {
  const Tokens p = tokenize(pred), r = tokenize(ref);
  if (p.empty() || r.empty()) return 0.0;
  const auto l = static_cast<double>(lcs_length(p, r));
  if (l == 0.0) return 0.0;
  const double prec = l / p.size(), rec = l / r.size();
  const double b2 = kRougeBeta * kRougeBeta;
  return 100.0 * (1.0 + b2) * prec * rec / (rec + b2 * prec);
}

std::vector<std::string> stem_forms(std::string_view word) {
  std::vector<std::string> out{std::string(word)};
  for (std::string_view suf : {"ing", "ed", "es", "s"}) {
    if (word.size() >= suf.size() + 3 && word.ends_with(suf)) {
      out.emplace_back(word.substr(0, word.size() - suf.size()));
    }
  }
  return out;
}

double meteor_lite(std::string_view pred, std::string_view ref) {
  const Tokens p = tokenize(pred), r = tokenize(ref);
  if (p.empty() || r.empty()) return 0.0;
  std::vector<int> align(p.size(), -1);
  std::vector<bool> used(r.size(), false);

  // Stage 1: exact matches, left to right.
  for (std::size_t i = 0; i < p.size(); ++i) {
    for (std::size_t j = 0; j < r.size(); ++j) {
      if (!used[j] && p[i] == r[j]) {
        align[i] = static_cast<int>(j);
        used[j] = true;
        break;
      }
    }
  }
  // Stage 2: shared stem among the leftovers.
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (align[i] >= 0) continue;
    const auto ps = stem_forms(p[i]);
    for (std::size_t j = 0; j < r.size() && align[i] < 0; ++j) {
      if (used[j]) continue;
      for (const auto& rs : stem_forms(r[j])) {
        if (std::find(ps.begin(), ps.end(), rs) != ps.end()) {
          align[i] = static_cast<int>(j);
          used[j] = true;
          break;
        }
      }
    }
  }

  int matches = 0, chunks = 0;
  int prev = -2;
  bool prev_matched = false;
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (align[i] < 0) {
      prev_matched = false;
      continue;
    }
    ++matches;
    if (!prev_matched || align[i] != prev + 1) ++chunks;
    prev = align[i];
    prev_matched = true;
  }
  if (matches == 0) return 0.0;
  const double prec = static_cast<double>(matches) / p.size();
  const double rec = static_cast<double>(matches) / r.size();
  const double fmean = 10.0 * prec * rec / (rec + 9.0 * prec);
  const double penalty = 0.5 * std::pow(static_cast<double>(chunks) / matches, 3.0);
  return 100.0 * fmean * (1.0 - penalty);
}

CiderScorer::CiderScorer(const std::vector<std::vector<std::string>>& corpus_refs)
    : n_docs_(corpus_refs.size()) {
  if (n_docs_ < 2) throw DegenerateCorpusError("CIDEr needs a corpus of at least two documents");
  for (const auto& refs : corpus_refs) {
    std::set<std::string> seen;
    for (const auto& s : refs) {
      const Tokens t = tokenize(s);
      for (int n = 1; n <= 4; ++n) {
        for (const auto& [g, c] : ngram_counts(t, n)) seen.insert(g);
      }
    }
    for (const auto& g : seen) ++df_[g];
  }
}

double CiderScorer::idf(const std::string& ngram) const {
  auto it = df_.find(ngram);
  const double df = it == df_.end() ? 0.0 : it->second;
  return std::log(static_cast<double>(n_docs_)) - std::log(std::max(1.0, df));
}

double CiderScorer::score(std::string_view pred, const std::vector<std::string>& refs) const {
  if (refs.empty()) return 0.0;
  const Tokens p = tokenize(pred);
  std::vector<Tokens> r;
  for (const auto& s : refs) r.push_back(tokenize(s));

  double total = 0.0;
  for (int n = 1; n <= 4; ++n) {
    std::map<std::string, double> pv;
    double pn = 0.0;
    for (const auto& [g, c] : ngram_counts(p, n)) {
      const double w = c * idf(g);
      pv[g] = w;
      pn += w * w;
    }
    double sum_cos = 0.0;
    for (const auto& toks : r) {
      double rn = 0.0, dot = 0.0;
      for (const auto& [g, c] : ngram_counts(toks, n)) {
        const double w = c * idf(g);
        rn += w * w;
        auto it = pv.find(g);
        if (it != pv.end()) dot += it->second * w;
      }
      if (pn > 0.0 && rn > 0.0) sum_cos += dot / (std::sqrt(pn) * std::sqrt(rn));
    }
    total += sum_cos / r.size();
  }
  return 10.0 * total / 4.0;
}

double cider(const std::vector<std::string>& preds, const std::vector<std::vector<std::string>>& refs) {
  if (preds.size() != refs.size()) throw ContractError("cider: predictions and references misaligned");
  const CiderScorer scorer(refs);
  double sum = 0.0;
  for (std::size_t i = 0; i < preds.size(); ++i) sum += scorer.score(preds[i], refs[i]);
  return sum / preds.size();
}

double embed_cosine(std::string_view pred, std::string_view ref, const Embedder& embedder,
                    bool* zero_warning) {
  const Embedding a = embedder.embed(pred), b = embedder.embed(ref);
  if (zero_warning) *zero_warning = a.is_zero() || b.is_zero();
  // Identical vectors have cosine 1; skip the rounding of the division.
  if (!a.is_zero() && a.values == b.values) return 100.0;
  return 100.0 * std::max(0.0, cosine(a, b));
}

MetricsReport evaluate_run(const std::map<std::string, std::string>& predictions,
                           const std::map<std::string, std::string>& annotations,
                           const Embedder& embedder) {
  MetricsReport rep;
  std::vector<std::string> keys;
  for (const auto& [k, ann] : annotations) {
    if (predictions.count(k)) {
      keys.push_back(k);
    } else {
      rep.missing.push_back(k);
    }
  }
  for (const auto& [k, pred] : predictions) {
    if (!annotations.count(k)) rep.unannotated.push_back(k);
  }
  if (keys.empty()) throw EvaluationError("predictions and annotations share no instance");

  std::optional<CiderScorer> scorer;
  if (keys.size() >= 2) {
    std::vector<std::vector<std::string>> corpus;
    for (const auto& k : keys) corpus.push_back({annotations.at(k)});
    scorer.emplace(corpus);
  }

  double cider_sum = 0.0;
  for (const auto& k : keys) {
    const auto& pred = predictions.at(k);
    const auto& ann = annotations.at(k);
    InstanceScores s;
    s.key = k;
    s.bleu4 = bleu4(pred, {ann});
    s.meteor = meteor_lite(pred, ann);
    s.rouge_l = rouge_l(pred, ann);
    s.cs = embed_cosine(pred, ann, embedder, &s.cs_zero_warning);
    if (scorer) {
      s.cider = scorer->score(pred, {ann});
      cider_sum += *s.cider;
    }
    rep.mean_bleu4 += s.bleu4;
    rep.mean_meteor += s.meteor;
    rep.mean_rouge_l += s.rouge_l;
    rep.mean_cs += s.cs;
    rep.instances.push_back(std::move(s));
  }
  const auto n = static_cast<double>(keys.size());
  rep.mean_bleu4 /= n;
  rep.mean_meteor /= n;
  rep.mean_rouge_l /= n;
  rep.mean_cs /= n;
  if (scorer) rep.mean_cider = cider_sum / n;
  return rep;
}

}  // namespace embcap
