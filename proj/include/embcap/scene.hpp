#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "embcap/common.hpp"

namespace embcap {

/// The six detectable object classes, in logit order.
enum class Category : int { Couch = 0, PottedPlant, Bed, Toilet, Tv, Table };

inline constexpr int kNumClasses = 6;

std::string_view category_name(Category c);
std::optional<Category> category_from_name(std::string_view name);

struct ObjectGT {
  int id = 0;
  Category category = Category::Couch;
  std::vector<std::string> attribute_tokens;  // color, material, context noun
  std::string gt_caption;
  std::vector<VoxelKey> voxels;
  // How hard the object is to describe, in [0, 1); scales caption noise.
  double difficulty = 0.0;
};

struct Bounds {
  int nx = 0;
  int ny = 0;
  int nz = 0;

  friend bool operator==(const Bounds&, const Bounds&) = default;
};

struct SceneSpec {
  Bounds bounds{32, 32, 12};
  double cell_size = 0.25;
  int n_objects = 8;
  int rooms_x = 2;
  int rooms_y = 2;
  int door_width = 4;
  // Free ring (in voxels) kept around every object, in x and y.
  int object_gap = 1;
  int max_attempts_per_object = 400;
};

/// Voxelized environment: static structure (walls) plus box-shaped objects.
/// Immutable once built; all queries are const.
class Scene {
 public:
  static constexpr int kFree = -1;
  static constexpr int kStructure = -2;

  Scene() = default;
  Scene(Bounds bounds, double cell_size, std::uint64_t seed);

  const Bounds& bounds() const { return bounds_; }
  double cell_size() const { return cell_size_; }
  std::uint64_t seed() const { return seed_; }
  const std::vector<ObjectGT>& objects() const { return objects_; }

  bool in_bounds(VoxelKey k) const {
    return k.x >= 0 && k.y >= 0 && k.z >= 0 && k.x < bounds_.nx && k.y < bounds_.ny &&
           k.z < bounds_.nz;
  }
  bool occupied(VoxelKey k) const { return in_bounds(k) && owner_[index(k)] != kFree; }

  /// Object index at a voxel, or kFree / kStructure.
  int owner(VoxelKey k) const { return in_bounds(k) ? owner_[index(k)] : kFree; }

  /// True when any voxel of column (x, y) is occupied, or the column lies
  /// outside the scene.
  bool column_blocked(int x, int y) const;

  /// The agent is a point; it is in free space when its voxel column is
  /// unobstructed.
  bool is_free(const Vec3& p) const;

  VoxelKey voxel_of(const Vec3& p) const;
  Vec3 voxel_center(VoxelKey k) const;

  /// Number of object voxels with at least one 6-neighbor outside the object.
  int surface_voxel_count(int object_id) const { return surface_counts_.at(object_id); }

  void add_structure(VoxelKey k);

  /// Adds an object; throws GenerationError when a voxel is out of bounds or
  /// already occupied. The object's id is reassigned to its index.
  void add_object(ObjectGT obj);

  const std::vector<std::uint8_t>& blocked_columns() const { return column_blocked_; }

 private:
  std::size_t index(VoxelKey k) const {
    return static_cast<std::size_t>(k.x) +
           static_cast<std::size_t>(bounds_.nx) *
               (static_cast<std::size_t>(k.y) + static_cast<std::size_t>(bounds_.ny) * k.z);
  }
  void mark(VoxelKey k, int owner);

  Bounds bounds_;
  double cell_size_ = 0.25;
  std::uint64_t seed_ = 0;
  std::vector<int> owner_;
  std::vector<std::uint8_t> column_blocked_;
  std::vector<ObjectGT> objects_;
  std::vector<int> surface_counts_;
};

/// Deterministic room-grid scene with axis-aligned box objects.
Scene generate_scene(std::uint64_t seed, const SceneSpec& spec);

// ---------------------------------------------------------------------------
// Agent and camera.
// ---------------------------------------------------------------------------

struct AgentState {
  Vec3 position;
  double yaw = 0.0;
  int step_index = 0;

  friend bool operator==(const AgentState&, const AgentState&) = default;
};

struct CameraConfig {
  double fov = std::numbers::pi / 2.0;
  int width = 64;
  int height = 64;
  double max_range = 10.0;
  double mount_height = 1.25;
};

struct CameraPose {
  Vec3 position;
  double yaw = 0.0;
};

struct Fragment {
  int object_id = 0;
  std::vector<int> pixels;  // row-major pixel indices, ascending
  double visible_fraction = 0.0;
};

struct Observation {
  int width = 0;
  int height = 0;
  double fov = 0.0;
  double max_range = 0.0;
  CameraPose camera_pose;
  std::vector<double> depth;  // row-major, +inf for misses
  std::vector<Fragment> visible_fragments;
  // Voxel columns (x + nx * y) crossed or hit by at least one ray, ascending.
  std::vector<int> seen_columns;
};

/// Unit direction of the ray through the center of pixel (u, v).
Vec3 pixel_ray(const CameraPose& pose, double fov, int width, int height, int u, int v);

/// Casts one ray per pixel with exact voxel traversal. Throws PoseError when
/// the camera sits in an obstructed column.
Observation observe(const Scene& scene, const AgentState& agent, const CameraConfig& camera);

struct Forward {
  double meters = 0.25;
};
struct Rotate {
  double radians = 0.0;
};
using Action = std::variant<Forward, Rotate>;

/// Applies one action. Forward motion stops before the first obstructed
/// column along the heading; the step counter always advances.
AgentState step_agent(const Scene& scene, const AgentState& agent, const Action& action);

/// Uniformly random free pose (column center) at camera height.
AgentState random_free_pose(const Scene& scene, const CameraConfig& camera, Rng& rng);

}  // namespace embcap
