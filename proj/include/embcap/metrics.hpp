#pragma once

#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "embcap/perception.hpp"

namespace embcap {

inline constexpr double kBleuEpsilon = 1e-9;
inline constexpr double kRougeBeta = 1.2;

/// BLEU-4 in percent against one or more references. Clipped n-gram
/// precisions, brevity penalty against the closest reference length, zero
/// matches replaced by kBleuEpsilon.
double bleu4(std::string_view pred, const std::vector<std::string>& refs);

std::size_t lcs_length(const std::vector<std::string>& a, const std::vector<std::string>& b);

/// ROUGE-L F-measure (beta 1.2) in percent.
double rouge_l(std::string_view pred, std::string_view ref);

/// Candidate stems used by the METEOR-lite stem stage: the word itself plus
/// the word with each of "ing", "ed", "es", "s" removed when at least three
/// characters remain.
std::vector<std::string> stem_forms(std::string_view word);

/// METEOR without synonym and paraphrase stages, in percent: exact then stem
/// matching, Fmean = 10PR / (R + 9P), penalty 0.5 * (chunks / matches)^3.
double meteor_lite(std::string_view pred, std::string_view ref);

/// CIDEr over a reference corpus. Document frequencies count, for each
/// n-gram, the documents whose reference set contains it.
class CiderScorer {
 public:
  /// One entry per document: that document's reference sentences. Needs at
  /// least two documents.
  explicit CiderScorer(const std::vector<std::vector<std::string>>& corpus_refs);

  std::size_t documents() const { return n_docs_; }
  double idf(const std::string& ngram) const;

  /// 10 * mean over n = 1..4 of the mean cosine between the candidate's and
  /// each reference's tf-idf vectors. Zero with no references.
  double score(std::string_view pred, const std::vector<std::string>& refs) const;

 private:
  std::size_t n_docs_ = 0;
  std::map<std::string, int> df_;
};

/// Mean CIDEr of preds[i] against refs[i] with the corpus built from `refs`.
double cider(const std::vector<std::string>& preds, const std::vector<std::vector<std::string>>& refs);

/// 100 * max(0, cosine). `zero_warning` is set when either embedding is zero.
double embed_cosine(std::string_view pred, std::string_view ref, const Embedder& embedder,
                    bool* zero_warning = nullptr);

struct InstanceScores {
  std::string key;
  double bleu4 = 0.0;
  double meteor = 0.0;
  double rouge_l = 0.0;
  std::optional<double> cider;
  double cs = 0.0;
  bool cs_zero_warning = false;
};

struct MetricsReport {
  std::string method;
  std::string policy;
  std::string captioner;
  std::vector<InstanceScores> instances;
  std::vector<std::string> missing;      // annotated, no prediction
  std::vector<std::string> unannotated;  // predicted, no annotation
  double mean_bleu4 = 0.0;
  double mean_meteor = 0.0;
  double mean_rouge_l = 0.0;
  std::optional<double> mean_cider;  // absent when fewer than two instances
  double mean_cs = 0.0;
};

/// Scores every key present on both sides. Throws EvaluationError when the
/// key sets do not overlap.
MetricsReport evaluate_run(const std::map<std::string, std::string>& predictions,
                           const std::map<std::string, std::string>& annotations,
                           const Embedder& embedder);

}  // namespace embcap
