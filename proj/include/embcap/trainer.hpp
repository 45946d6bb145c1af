#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "embcap/common.hpp"
#include "embcap/perception.hpp"

namespace embcap {

// ---------------------------------------------------------------------------
// Vocabulary and targets
// ---------------------------------------------------------------------------

class Vocabulary {
 public:
  static constexpr int kPad = 0;
  static constexpr int kEos = 1;
  static constexpr int kUnk = 2;

  /// Special tokens followed by the lexicon's word list.
  Vocabulary();
  explicit Vocabulary(std::vector<std::string> words);

  int size() const { return static_cast<int>(words_.size()); }
  int id(std::string_view word) const;
  const std::string& word(int id) const;
  const std::vector<std::string>& words() const { return words_; }

  /// Token ids followed by <eos>, padded with <pad> to `length`. Captions
  /// longer than length - 1 words are cut and lose their <eos>.
  std::vector<int> encode(std::string_view caption, int length) const;
  /// Words up to the first <eos>; <pad> and <unk> are dropped.
  std::string decode(std::span<const int> ids) const;

  friend bool operator==(const Vocabulary&, const Vocabulary&) = default;

 private:
  std::vector<std::string> words_;
  std::map<std::string, int, std::less<>> index_;
};

// ---------------------------------------------------------------------------
// Views and the toy captioner
// ---------------------------------------------------------------------------

/// What the toy captioner "sees" of one view: the detector label, the view's
/// raw caption tokens standing in for appearance, and visibility.
struct View {
  int instance_id = 0;
  int label = 0;
  std::string appearance;
  double visible_fraction = 1.0;
};

inline constexpr int kAppearanceBuckets = 64;
inline constexpr int kDescriptorDim = kNumClasses + kAppearanceBuckets + 1;

/// label one-hot, L2-normalized hashed appearance token counts, visibility.
std::vector<double> view_descriptor(const View& v);

struct Example {
  View view;
  std::vector<int> target;  // length T, see Vocabulary::encode
};

/// Linear encoder x = W d + b (F features) and per-position softmax decoder
/// z_t = U_t x + c_t over C tokens for T positions. All parameters live in
/// one flat vector: W (F x D), b (F), U (T x C x F), c (T x C).
class ToyCaptioner {
 public:
  ToyCaptioner() = default;
  ToyCaptioner(Vocabulary vocab, int features, int length, Rng& rng, double init_scale = 0.1);

  const Vocabulary& vocab() const { return vocab_; }
  int features() const { return features_; }
  int length() const { return length_; }
  int classes() const { return vocab_.size(); }
  int input_dim() const { return kDescriptorDim; }

  std::vector<double>& params() { return params_; }
  const std::vector<double>& params() const { return params_; }
  void set_params(std::vector<double> p);

  std::vector<double> encode(std::span<const double> descriptor) const;
  /// T x C row-major softmax probabilities.
  std::vector<double> decode_probs(std::span<const double> x) const;
  /// Greedy per-position argmax, rendered to text.
  std::string generate(const View& v) const;

  std::size_t w_offset() const { return 0; }
  std::size_t b_offset() const { return static_cast<std::size_t>(features_) * kDescriptorDim; }
  std::size_t u_offset() const { return b_offset() + features_; }
  std::size_t c_offset() const {
    return u_offset() + static_cast<std::size_t>(length_) * classes() * features_;
  }

  friend bool operator==(const ToyCaptioner&, const ToyCaptioner&) = default;

 private:
  Vocabulary vocab_;
  int features_ = 0;
  int length_ = 0;
  std::vector<double> params_;
};

inline constexpr int kDefaultFeatures = 32;
inline constexpr int kDefaultLength = 16;

// ---------------------------------------------------------------------------
// Losses
// ---------------------------------------------------------------------------

inline constexpr double kProbFloor = 1e-12;

/// Cross-entropy summed over positions whose target is not <pad>. `probs` is
/// T x C row-major.
double caption_loss(std::span<const double> probs, std::span<const int> target, int classes);

double euclidean(std::span<const double> a, std::span<const double> b);

/// max(d(a, p) - d(a, n) + margin, 0) with Euclidean d.
double triplet_loss(std::span<const double> a, std::span<const double> p, std::span<const double> n,
                    double margin);

double combined_loss(double cap, double tr, double lambda_tr);

struct LossConfig {
  double lambda_tr = 0.1;
  double margin = 2.0;
  double learning_rate = 5e-4;
  double weight_decay = 1e-3;
  int batch_size = 64;
  int epochs = 10;
  int patience = 3;
  double val_fraction = 0.2;
};

// ---------------------------------------------------------------------------
// Triplets
// ---------------------------------------------------------------------------

/// Indices into the example list the batch was drawn from.
struct TripletBatch {
  std::vector<std::size_t> anchors;
  std::vector<std::size_t> positives;
  std::vector<std::size_t> negatives;
  int skipped_single_view = 0;
  bool no_negatives = false;  // fewer than two instances in the pool

  bool empty() const { return anchors.empty(); }
  std::size_t size() const { return anchors.size(); }
};

/// For every anchor in `batch`, a uniformly drawn other view of the same
/// instance and a uniformly drawn view of a different instance, both taken
/// from `pool` (which indexes `instance_of`).
TripletBatch sample_triplets(std::span<const std::size_t> batch, std::span<const std::size_t> pool,
                             std::span<const int> instance_of, Rng& rng);

// ---------------------------------------------------------------------------
// Batch loss and gradients
// ---------------------------------------------------------------------------

struct LossParts {
  double caption = 0.0;
  double triplet = 0.0;
  double total = 0.0;
};

/// Sum of caption losses over `batch` plus lambda_tr times the sum of triplet
/// losses. When `grad` is non-null it receives the analytic gradient (same
/// size as the parameters). Weight decay is not part of the loss.
LossParts batch_loss(const ToyCaptioner& model, std::span<const Example> examples,
                     std::span<const std::size_t> batch, const TripletBatch& triplets,
                     const LossConfig& cfg, std::vector<double>* grad);

struct GradCheckResult {
  std::optional<double> max_rel_error;  // empty when skipped
  std::string skip_reason;
  std::size_t checked = 0;
};

inline constexpr double kGradCheckStep = 1e-5;
inline constexpr double kKinkTolerance = 1e-4;

/// Central differences on `n_params` randomly chosen parameters. Relative
/// error is |a - n| / max(|a|, |n|, abs_floor). Skips batches with a triplet
/// within kKinkTolerance of the hinge or with a zero distance.
GradCheckResult grad_check(const ToyCaptioner& model, std::span<const Example> examples,
                           std::span<const std::size_t> batch, const TripletBatch& triplets,
                           const LossConfig& cfg, Rng& rng, std::size_t n_params = 64,
                           double abs_floor = 1e-3);

// ---------------------------------------------------------------------------
// Training
// ---------------------------------------------------------------------------

struct EpochRecord {
  int epoch = 0;  // 0 is the untrained evaluation
  double train_loss = 0.0;
  double val_loss = 0.0;
};

/// Patience counter on validation loss: stop once the loss has failed to
/// improve on its best value for `patience` consecutive epochs.
class EarlyStopper {
 public:
  explicit EarlyStopper(int patience) : patience_(patience) {}
  /// Returns true when training should stop after this epoch.
  bool update(int epoch, double val_loss);
  int best_epoch() const { return best_epoch_; }
  bool improved() const { return improved_; }

 private:
  int patience_;
  int bad_ = 0;
  int best_epoch_ = -1;
  double best_ = 0.0;
  bool improved_ = false;
};

struct TrainResult {
  ToyCaptioner model;  // parameters from the best validation epoch
  std::vector<EpochRecord> history;
  int best_epoch = 0;
  bool stopped_early = false;
  int skipped_single_view = 0;
};

/// Splits instances into train/val (val gets ceil(val_fraction * instances),
/// at least one when there are two or more instances).
void split_by_instance(std::span<const Example> examples, double val_fraction, Rng& rng,
                       std::vector<std::size_t>& train, std::vector<std::size_t>& val);

/// Mini-batch gradient descent on the combined loss with L2 weight decay.
/// Per-epoch losses are reported per example. Throws ContractError on an
/// empty dataset.
TrainResult finetune(const ToyCaptioner& model, std::span<const Example> examples,
                     const LossConfig& cfg, std::uint64_t seed);

// ---------------------------------------------------------------------------
// Consistency
// ---------------------------------------------------------------------------

struct Quartiles {
  double min = 0.0;
  double q1 = 0.0;
  double median = 0.0;
  double q3 = 0.0;
  double max = 0.0;
};

/// Linear-interpolation quantiles. Requires a non-empty input.
Quartiles quartiles(std::vector<double> values);

struct ConsistencyReport {
  std::vector<int> instance_ids;
  std::vector<double> scores;  // aligned with instance_ids
  std::optional<Quartiles> summary;
};

/// Decodes every view, embeds the captions and reports the mean pairwise
/// cosine per instance with at least two views.
ConsistencyReport consistency_score(const ToyCaptioner& model, std::span<const View> views,
                                    const Embedder& embedder);

// ---------------------------------------------------------------------------
// Data assembly
// ---------------------------------------------------------------------------

/// Targets are each view's own caption (pre-training on raw captions).
std::vector<Example> raw_caption_examples(std::span<const View> views, const Vocabulary& vocab,
                                          int length);

/// Targets are the instance's pseudo-caption; views of instances without one
/// are left out.
std::vector<Example> pseudo_caption_examples(std::span<const View> views,
                                             const std::map<int, std::string>& pseudo,
                                             const Vocabulary& vocab, int length);

/// `views_per_object` captioned views per object at uniform visibility in
/// [min_visible, 1]; the view label is the object's category.
std::vector<View> simulate_views(std::span<const ObjectGT> objects, int views_per_object,
                                 Captioner& captioner, Rng& rng, double min_visible = 0.3);

/// Settings for the base captioner fitted on raw captions before fine-tuning.
LossConfig pretrain_config();

struct AblationRow {
  double lambda_tr = 0.0;
  double initial_train_loss = 0.0;
  double final_train_loss = 0.0;
  double best_val_loss = 0.0;
  int epochs_run = 0;
  double consistency_median = 0.0;
  bool converged = false;
};

std::vector<double> ablation_lambdas();

std::vector<AblationRow> lambda_ablation(const ToyCaptioner& base, std::span<const Example> examples,
                                         std::span<const View> eval_views, const Embedder& embedder,
                                         const LossConfig& cfg, std::span<const double> lambdas,
                                         std::uint64_t seed);

std::string ablation_markdown(std::span<const AblationRow> rows);

}  // namespace embcap
