#pragma once

#include <algorithm>
#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "embcap/common.hpp"
#include "embcap/scene.hpp"

namespace embcap {

// ---------------------------------------------------------------------------
// Detections
// ---------------------------------------------------------------------------

/// Pixel box with exclusive upper corner: covers [x0, x1) x [y0, y1).
struct BBox {
  int x0 = 0;
  int y0 = 0;
  int x1 = 0;
  int y1 = 0;

  double area() const { return static_cast<double>(std::max(0, x1 - x0)) * std::max(0, y1 - y0); }
  friend bool operator==(const BBox&, const BBox&) = default;
};

double iou(const BBox& a, const BBox& b);

/// Grows a box by `margin` pixels per side and clamps it to the image.
BBox expand_box(const BBox& b, int margin, int width, int height);

struct Detection {
  std::uint64_t view_id = 0;
  int object_id_gt = -1;  // simulator truth; the pipeline only forwards it
  std::vector<double> logits;
  BBox bbox;
  std::vector<std::uint8_t> mask;  // width * height, row-major
  double confidence = 0.0;
  double visible_fraction = 0.0;

  int label() const;
  std::vector<int> mask_pixels() const;
};

struct DetectorConfig {
  double misclass_rate = 0.05;
  int min_pixels = 10;
  int bbox_margin = 10;
  double logit_peak = 4.0;
  double logit_noise = 0.5;
  double confidence_base = 0.65;
  double confidence_slope = 0.6;
  double confidence_jitter = 0.05;
};

struct FilterConfig {
  double min_confidence = 0.7;
  // Area threshold as stated for a 640x480 image; rescaled to the actual resolution.
  double min_area_reference = 8000.0;
  int reference_width = 640;
  int reference_height = 480;
  double nms_iou = 0.8;

  double min_area(int width, int height) const {
    return min_area_reference * (static_cast<double>(width) * height) /
           (static_cast<double>(reference_width) * reference_height);
  }
};

/// Mock instance segmenter: one detection per visible fragment with at least
/// `min_pixels` pixels. `first_view_id` seeds the opaque view ids.
std::vector<Detection> detect(const Observation& obs, const Scene& scene,
                              const DetectorConfig& cfg, Rng& rng,
                              std::uint64_t first_view_id = 0);

/// Greedy non-maximum suppression; survivors keep their input order.
std::vector<Detection> nms(std::vector<Detection> dets, double iou_threshold);

/// Confidence and area filtering followed by NMS.
std::vector<Detection> filter_detections(std::vector<Detection> dets, const FilterConfig& cfg,
                                         int width, int height);

/// Recomputes each box from the mask pixels that carry finite depth (the ones
/// that land in the map), expanded by `margin`. Detections left with no such
/// pixel are dropped.
std::vector<Detection> reproject_boxes(std::vector<Detection> dets, const Observation& obs,
                                       int margin);

// ---------------------------------------------------------------------------
// Captions
// ---------------------------------------------------------------------------

struct CaptionRecord {
  std::uint64_t id = 0;
  std::string text;
  int object_id_gt = -1;
  CameraPose view_pose;
  bool corrupted = false;
  double visible_fraction = 0.0;
  int label = 0;  // detector argmax for the view
};

struct NoiseConfig {
  double p_attr_swap = 0.1;
  double p_category_swap = 0.05;
  double p_hallucinate = 0.1;
  double p_drop_detail = 0.1;
  // Added to the corruption probability per unit of (1 - visible_fraction).
  double occlusion_boost = 0.2;
  // Added per unit of the object's difficulty. Zero gives every object the
  // same noise level.
  double difficulty_boost = 0.0;
  double p_boilerplate = 0.1;
  std::map<std::string, std::vector<std::string>> synonym_table = default_synonyms();

  /// Probability that at least one corruption fires at full visibility.
  double base_corruption() const;
  /// clamp(base + occlusion_boost * (1 - visible_fraction) + difficulty_boost * difficulty, 0, 1).
  double effective_corruption(double visible_fraction, double difficulty = 0.0) const;

  static NoiseConfig zero();
  /// Low base noise with strong per-object difficulty: some objects are
  /// described consistently, others rarely.
  static NoiseConfig heterogeneous();
  static std::map<std::string, std::vector<std::string>> default_synonyms();
};

/// Noisy captioner standing in for an off-the-shelf model: starts from the
/// annotation and corrupts it with a view-dependent probability.
CaptionRecord caption(const ObjectGT& object, double visible_fraction, const NoiseConfig& cfg,
                      Rng& rng);

class Captioner {
 public:
  virtual ~Captioner() = default;
  virtual CaptionRecord describe(const ObjectGT& object, double visible_fraction, Rng& rng) = 0;
};

class NoisyCaptioner final : public Captioner {
 public:
  explicit NoisyCaptioner(NoiseConfig cfg) : cfg_(std::move(cfg)) {}
  CaptionRecord describe(const ObjectGT& object, double visible_fraction, Rng& rng) override {
    return caption(object, visible_fraction, cfg_, rng);
  }

 private:
  NoiseConfig cfg_;
};

// ---------------------------------------------------------------------------
// Text embedding
// ---------------------------------------------------------------------------

struct Embedding {
  std::vector<double> values;

  bool is_zero() const;
};

/// Cosine similarity; 0 when either side is the zero vector.
double cosine(const Embedding& a, const Embedding& b);

class Embedder {
 public:
  virtual ~Embedder() = default;
  virtual Embedding embed(std::string_view text) const = 0;
  virtual std::size_t dim() const = 0;
};

/// Feature-hashing bag of words: unigrams weight 1, adjacent bigrams weight
/// 0.5, FNV-1a buckets, L2 normalized.
class HashingEmbedder final : public Embedder {
 public:
  explicit HashingEmbedder(std::size_t dim = 256) : dim_(dim) {}

  Embedding embed(std::string_view text) const override;
  std::size_t dim() const override { return dim_; }

  std::size_t unigram_bucket(std::string_view token) const;
  std::size_t bigram_bucket(std::string_view first, std::string_view second) const;

 private:
  std::size_t dim_;
};

}  // namespace embcap
