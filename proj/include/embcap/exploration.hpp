#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "embcap/common.hpp"
#include "embcap/grid.hpp"
#include "embcap/perception.hpp"
#include "embcap/scene.hpp"
#include "embcap/voxel_map.hpp"

namespace embcap {

// ---------------------------------------------------------------------------
// Planning and goal selection
// ---------------------------------------------------------------------------

/// Dijkstra over the 4-connected grid. Entering a free cell costs 1, an
/// unknown cell `unknown_cost`; occupied cells are impassable. The returned
/// path excludes `start` and ends at `goal` (empty when start == goal).
std::vector<Cell> plan_path(const ExplorationGrid& grid, Cell start, Cell goal, int unknown_cost = 2);

/// Cost of a path as plan_path charges it.
long path_cost(const ExplorationGrid& grid, const std::vector<Cell>& path, int unknown_cost = 2);

/// Cells reachable from the agent through non-occupied cells, as a K*K mask.
std::vector<std::uint8_t> reachable_mask(const ExplorationGrid& grid);

Cell random_goal_policy(const ExplorationGrid& grid, Rng& rng);

Cell frontier_policy(const ExplorationGrid& grid);

/// Sum of the disagreement channel over the (2r+1)^2 window around `c`.
double window_mass(const PolicyState& state, Cell c, int radius);

Cell cla_greedy_policy(const PolicyState& state, const ExplorationGrid& grid, int radius = 4);

enum class PolicyKind { Random, Frontier, Cla };

std::string_view policy_name(PolicyKind p);
PolicyKind policy_from_name(std::string_view name);

// ---------------------------------------------------------------------------
// Episodes
// ---------------------------------------------------------------------------

struct EpisodeConfig {
  PolicyKind policy = PolicyKind::Frontier;
  int n_steps = 300;
  int grid_size = kPolicyGridSize;
  int unknown_cost = 2;
  int cla_radius = 4;
  // The CLA policy ignores disagreement within `cla_tabu_radius` cells of its
  // `cla_tabu` most recently reached goals.
  int cla_tabu = 1;
  int cla_tabu_radius = 16;
  int staleness_steps = 25;
  // Turn through a full circle in quarter turns whenever a goal is reached.
  bool look_around = true;
  double forward_step = 0.25;
  CameraConfig camera;
  DetectorConfig detector;
  FilterConfig filter;
};

struct GoalEvent {
  Cell goal;
  std::string reason;  // "start", "arrived", "stale", "no_path"
};

struct LoggedDetection {
  Detection det;
  std::vector<int> pixels;      // mask pixels with finite depth, ascending
  std::vector<double> depths;   // aligned with pixels
};

struct StepRecord {
  int step = 0;
  std::string action;  // "forward" or "rotate"
  double action_value = 0.0;
  AgentState agent;     // after the action
  CameraPose camera_pose;
  int hit_pixels = 0;
  int seen_columns = 0;
  std::optional<GoalEvent> goal_event;
  std::vector<LoggedDetection> detections;
  std::vector<CaptionRecord> captions;  // aligned with detections
};

struct EpisodeLog {
  std::string policy;
  std::uint64_t seed = 0;
  int n_steps = 0;
  std::uint64_t scene_seed = 0;
  CameraConfig camera;
  double map_resolution = 0.25;
  AgentState start;
  bool completed_early = false;
  std::vector<StepRecord> records;
};

struct EpisodeResult {
  EpisodeLog log;
  SemanticVoxelMap map;
  std::size_t known_columns = 0;
};

/// Runs one episode from a seeded random start. Captions come from
/// `captioner` and steer the CLA policy through `embedder`.
EpisodeResult run_episode(const Scene& scene, const EpisodeConfig& cfg, std::uint64_t seed,
                          Captioner& captioner, const Embedder& embedder);

/// Rebuilds the voxel map from the logged detections alone.
SemanticVoxelMap replay_map(const EpisodeLog& log);

/// Every caption in the log, in step order.
std::vector<CaptionRecord> all_captions(const EpisodeLog& log);

}  // namespace embcap
