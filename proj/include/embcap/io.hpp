#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "embcap/consensus.hpp"
#include "embcap/exploration.hpp"
#include "embcap/metrics.hpp"
#include "embcap/scene.hpp"
#include "embcap/trainer.hpp"
#include "embcap/voxel_map.hpp"

// File formats exchanged between phases. Every document carries a "schema"
// tag; readers reject other versions with ParseError.
namespace embcap::io {

inline constexpr std::string_view kSceneSchema = "scene/1";
inline constexpr std::string_view kEpisodeSchema = "episode/1";
inline constexpr std::string_view kMapSchema = "map/1";
inline constexpr std::string_view kPseudoSchema = "pseudo/1";
inline constexpr std::string_view kModelSchema = "toycap/1";
inline constexpr std::string_view kReportSchema = "report/1";
inline constexpr std::string_view kManifestSchema = "manifest/1";
inline constexpr std::string_view kTrainingSchema = "training/1";
inline constexpr std::string_view kConsistencySchema = "consistency/1";

std::string read_file(const std::filesystem::path& p);
/// Writes through a temporary sibling and renames it into place.
void write_file(const std::filesystem::path& p, std::string_view content);

std::string sha256_hex(std::string_view data);
std::string sha256_file(const std::filesystem::path& p);

// ---------------------------------------------------------------------------
// Scene and annotations
// ---------------------------------------------------------------------------

/// Summary of a generated scene (spec, seed, objects without voxels). The
/// scene itself is regenerated from spec and seed.
std::string scene_to_json(const Scene& scene, const SceneSpec& spec);
SceneSpec scene_spec_from_json(std::string_view text, std::uint64_t* seed = nullptr);

std::string scene_spec_to_json(const SceneSpec& spec);

struct Annotation {
  int object_id = 0;
  std::string gt_caption;
  std::string category;

  friend bool operator==(const Annotation&, const Annotation&) = default;
};

std::string annotations_jsonl(const Scene& scene);
std::vector<Annotation> parse_annotations(std::string_view text);

// ---------------------------------------------------------------------------
// Episodes and maps
// ---------------------------------------------------------------------------

/// Header line followed by one line per step.
std::string episode_to_jsonl(const EpisodeLog& log);
EpisodeLog episode_from_jsonl(std::string_view text);

struct MapFile {
  SemanticVoxelMap map;
  std::vector<ObjectInstance> instances;
};

std::string map_to_json(const SemanticVoxelMap& map, const std::vector<ObjectInstance>& instances);
MapFile map_from_json(std::string_view text);

// ---------------------------------------------------------------------------
// Pseudo-captions
// ---------------------------------------------------------------------------

struct PseudoRecord {
  PseudoCaption caption;
  int pseudo_label = 0;
  std::vector<View> views;  // the instance's captioned views, for fine-tuning
};

struct PseudoFile {
  std::string method;
  std::string policy;
  std::uint64_t seed = 0;
  std::vector<PseudoRecord> records;
  std::vector<std::string> skipped;
};

std::string pseudo_to_jsonl(const PseudoFile& f);
PseudoFile pseudo_from_jsonl(std::string_view text);

// ---------------------------------------------------------------------------
// Models
// ---------------------------------------------------------------------------

std::string model_to_json(const ToyCaptioner& m);
ToyCaptioner model_from_json(std::string_view text);

// ---------------------------------------------------------------------------
// Reports
// ---------------------------------------------------------------------------

struct FinetuneSummary {
  double lambda_tr = 0.0;
  std::vector<EpochRecord> history;
  int best_epoch = 0;
  bool stopped_early = false;
};

struct RunReport {
  std::uint64_t seed = 0;
  std::string policy;
  std::string method;
  std::string captioner = "noisy-sim";
  std::optional<MetricsReport> metrics;          // pseudo-captions vs annotations
  std::optional<MetricsReport> captioner_before;  // base toy captioner vs annotations
  std::optional<MetricsReport> captioner_after;   // fine-tuned toy captioner vs annotations
  std::optional<ConsistencyReport> consistency_pre;
  std::optional<ConsistencyReport> consistency_post;
  std::optional<FinetuneSummary> finetune;
  std::vector<AblationRow> ablation;
  std::vector<std::string> notes;
};

std::string report_to_json(const RunReport& r);
RunReport report_from_json(std::string_view text);

struct TrainingLog {
  FinetuneSummary finetune;
  std::vector<AblationRow> ablation;
};

std::string training_to_json(const TrainingLog& t);
TrainingLog training_from_json(std::string_view text);

struct ConsistencyPair {
  ConsistencyReport pre;
  ConsistencyReport post;
};

std::string consistency_to_json(const ConsistencyPair& c);
ConsistencyPair consistency_from_json(std::string_view text);
/// instance_id,score rows with a header.
std::string consistency_csv(const ConsistencyReport& c);

// ---------------------------------------------------------------------------
// Manifests
// ---------------------------------------------------------------------------

struct ManifestEntry {
  std::string phase;
  std::string path;  // relative to the run directory
  std::string sha256;
  std::string schema;
};

struct PhaseStatus {
  std::string phase;
  std::string status;  // "done", "skipped", "failed"
  std::string reason;
};

struct Manifest {
  std::string config_hash;
  std::uint64_t seed = 0;
  std::map<std::string, std::string> versions;
  std::vector<ManifestEntry> entries;
  std::vector<PhaseStatus> phases;
  std::vector<std::string> deviations;
  std::map<std::string, std::string> timestamps;  // phase -> UTC finish time; not hashed
  std::optional<PhaseStatus> failure;
};

std::string manifest_to_json(const Manifest& m);
Manifest manifest_from_json(std::string_view text);

}  // namespace embcap::io
