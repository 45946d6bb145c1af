#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "embcap/consensus.hpp"
#include "embcap/exploration.hpp"
#include "embcap/io.hpp"
#include "embcap/remote.hpp"
#include "embcap/scene.hpp"
#include "embcap/trainer.hpp"

namespace embcap {

struct EndpointSettings {
  std::string kind;  // captioner: "noisy-sim" | "remote"; embedder: "hashing" | "remote"
  RemoteConfig remote;
  std::size_t dim = 256;
};

struct LlmSettings {
  RemoteConfig remote;
  std::string model = "gpt-4";
  int max_tokens = 64;
};

struct RunConfig {
  std::optional<std::filesystem::path> scene_spec_path;
  SceneSpec scene;
  std::string policy = "frontier";
  int steps = 300;
  EpisodeConfig episode;  // policy and steps are copied in at run time
  std::string noise_preset = "default";
  NoiseConfig noise;
  ConsensusConfig consensus;
  LlmSettings llm;
  EndpointSettings captioner{"noisy-sim", {}, 256};
  EndpointSettings embedder{"hashing", {}, 256};
  LossConfig loss;
  bool ablation = true;
  std::vector<std::uint64_t> seeds{0};
  std::filesystem::path output_dir = "runs";
};

/// Replaces ${VAR} and ${VAR:-default} from the environment. An unset
/// variable without a default is a ConfigError.
std::string interpolate_env(std::string_view text);

/// Parses a YAML run config (after interpolation). Relative paths resolve
/// against `base_dir`. Throws ConfigError.
RunConfig parse_config(std::string_view yaml_text, const std::filesystem::path& base_dir = ".");
RunConfig load_config(const std::filesystem::path& path);

/// Canonical JSON of the effective config without secrets or output paths.
std::string canonical_config(const RunConfig& cfg);

NoiseConfig noise_preset(std::string_view name);

/// One line per scene object; warns when the scene has none.
std::string export_annotations(const Scene& scene, std::vector<std::string>* warnings = nullptr);

// ---------------------------------------------------------------------------
// Phase helpers shared by the CLI and the orchestrator
// ---------------------------------------------------------------------------

std::unique_ptr<Captioner> make_captioner(const RunConfig& cfg);
std::unique_ptr<Embedder> make_embedder(const RunConfig& cfg);
/// Null when no LLM endpoint is configured.
std::unique_ptr<LlmClient> make_llm(const RunConfig& cfg);

Scene scene_for(const RunConfig& cfg, std::uint64_t seed);

struct MapBuild {
  SemanticVoxelMap map;
  std::vector<ObjectInstance> instances;
};

MapBuild build_map(const EpisodeLog& log);

/// Caption sets per instance; object_id is the majority ground-truth object
/// (smallest id on ties) and proxy_text its attribute tokens when `scene` is given.
std::vector<InstanceCaptions> instance_captions(const std::vector<ObjectInstance>& instances,
                                                const std::vector<CaptionRecord>& captions,
                                                const Scene* scene);

io::PseudoFile run_consensus(const EpisodeLog& log, const MapBuild& built, const Scene* scene,
                             const ConsensusConfig& cfg, LlmClient* llm, const Embedder& embedder);

struct TrainingOutcome {
  ToyCaptioner base;
  TrainResult tuned;
  std::vector<AblationRow> ablation;
  std::vector<View> views;
};

std::vector<View> pseudo_views(const io::PseudoFile& pseudo);

/// Pre-trains a base model on the raw captions of every view, then
/// fine-tunes it on the pseudo-captions. Throws ContractError without data.
TrainingOutcome run_training(const io::PseudoFile& pseudo, const LossConfig& loss, bool ablation,
                             const Embedder& embedder, std::uint64_t seed);

/// Pseudo-caption per ground-truth object, keyed by object id; when several
/// instances map to one object the one with the most views wins.
std::map<std::string, std::string> predictions_by_object(const io::PseudoFile& pseudo);

/// The model's caption for each object's best-visible view.
std::map<std::string, std::string> model_predictions(const ToyCaptioner& model, const io::PseudoFile& pseudo);

std::map<std::string, std::string> annotation_map(const std::vector<io::Annotation>& anns);

// ---------------------------------------------------------------------------
// Orchestration
// ---------------------------------------------------------------------------

inline constexpr const char* kPhases[] = {"explore", "build-map", "consensus", "finetune", "consistency", "evaluate"};

struct RunOptions {
  bool resume = true;
  std::ostream* log = nullptr;
};

/// Runs every phase for one seed into `dir`, writing manifest.json after each
/// phase. On failure the manifest records it and the exception propagates.
io::Manifest run_seed(const RunConfig& cfg, std::uint64_t seed, const std::filesystem::path& dir,
                      const RunOptions& opts = {});

/// run_seed for every configured seed into <output_dir>/seed-<n>.
std::vector<io::Manifest> run_pipeline(const RunConfig& cfg, const RunOptions& opts = {});

/// Checks every manifest entry against the file on disk; returns the
/// mismatching or missing paths.
std::vector<std::string> verify_manifest(const io::Manifest& m, const std::filesystem::path& dir);

// ---------------------------------------------------------------------------
// Reports
// ---------------------------------------------------------------------------

struct ReportTables {
  std::string table1_csv;
  std::string table1_md;
  std::string table2_csv;
  std::string table2_md;
  std::size_t table1_rows = 0;
  std::size_t table2_rows = 0;
};

/// Table 1 analog (policy x method pseudo-caption metrics) and Table 2
/// analog (captioner before / after fine-tuning), averaged over seeds in
/// each group; the best value per column within each policy is bolded in
/// markdown. Throws ReportError on schema mismatch or empty input.
ReportTables build_report(const std::vector<io::RunReport>& reports);

/// Loads report.json from each run directory or manifest path.
std::vector<io::RunReport> load_reports(const std::vector<std::filesystem::path>& paths);

}  // namespace embcap
