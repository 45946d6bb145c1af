#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <span>
#include <vector>

#include "embcap/common.hpp"
#include "embcap/grid.hpp"
#include "embcap/perception.hpp"
#include "embcap/scene.hpp"

namespace embcap {

struct VoxelCell {
  std::vector<double> logit_sum;  // running sum of detection logits
  int hit_count = 0;
  std::vector<std::uint64_t> caption_refs;

  int label() const;  // argmax of logit_sum, lowest index on ties
};

/// Sparse semantic voxel map. Single writer; readers may run concurrently
/// with each other once integration stops.
class SemanticVoxelMap {
 public:
  explicit SemanticVoxelMap(double resolution = 0.25, int num_classes = kNumClasses);

  double resolution() const { return resolution_; }
  int num_classes() const { return num_classes_; }
  std::size_t size() const { return cells_.size(); }
  bool empty() const { return cells_.empty(); }

  const std::map<VoxelKey, VoxelCell>& cells() const { return cells_; }
  const VoxelCell* find(VoxelKey k) const;

  /// Adds one pixel hit to voxel `k`. Throws ContractError on a logits length mismatch.
  VoxelCell& add_hit(VoxelKey k, std::span<const double> logits);

  /// Direct cell insertion, used when loading snapshots and in tests.
  void put(VoxelKey k, VoxelCell cell);

  friend bool operator==(const SemanticVoxelMap&, const SemanticVoxelMap&);

 private:
  double resolution_;
  int num_classes_;
  std::map<VoxelKey, VoxelCell> cells_;
};

/// Voxel hit by the ray through `pixel` at the observation's recorded depth.
VoxelKey back_project(const Observation& obs, int pixel, double resolution);

/// Projects every masked pixel with finite depth into the map. `captions`
/// must be aligned 1:1 with `dets`.
void integrate(SemanticVoxelMap& map, const Observation& obs, std::span<const Detection> dets,
               std::span<const CaptionRecord> captions);

struct ObjectInstance {
  int instance_id = 0;
  int pseudo_label = 0;
  std::vector<VoxelKey> voxels;          // ascending
  std::vector<std::uint64_t> captions;   // unique caption ids, ascending
};

/// 26-connected components over voxels sharing the same argmax label. Ids
/// increase in discovery order, scanning voxels in ascending key order.
std::vector<ObjectInstance> cluster_objects(const SemanticVoxelMap& map);

/// Mean of (1 - cos) / 2 over all unordered pairs. Zero for fewer than two
/// captions. Computed in O(n * D) from the sum of embeddings.
double object_disagreement(std::span<const Embedding> embeddings);

using EmbeddingLookup = std::function<const Embedding&(std::uint64_t caption_id)>;

double object_disagreement(const ObjectInstance& inst, const EmbeddingLookup& lookup);

struct PolicyState {
  int size = kPolicyGridSize;
  std::vector<double> disagreement;  // size * size, row-major, in [0, 1]
  std::vector<double> explored;      // 1 observed, 0 unknown, agent cell 0.5
  double orientation = 0.0;

  double disagreement_at(Cell c) const {
    return disagreement[static_cast<std::size_t>(c.row) * size + c.col];
  }
};

inline constexpr double kAgentMarker = 0.5;

/// Writes each instance's disagreement into the grid cells under its (x, y)
/// footprint, max-reducing over z and over overlapping instances.
/// `disagreements` is aligned with `instances`.
PolicyState disagreement_map(const SemanticVoxelMap& map, std::span<const ObjectInstance> instances,
                             std::span<const double> disagreements, const AgentState& agent,
                             const ExplorationGrid& explored, const GridFrame& frame);

}  // namespace embcap
