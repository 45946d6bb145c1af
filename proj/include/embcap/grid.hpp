#pragma once

#include <cstdint>
#include <vector>

#include "embcap/common.hpp"
#include "embcap/scene.hpp"

namespace embcap {

inline constexpr int kPolicyGridSize = 128;

enum class CellState : std::uint8_t { Unknown = 0, Free = 1, Occupied = 2 };

/// World-to-grid mapping for the K x K top-down maps. The grid covers the
/// square [0, extent) x [0, extent) of the world.
struct GridFrame {
  int size = kPolicyGridSize;
  double cell_m = 0.0;

  static GridFrame for_scene(const Scene& scene, int size = kPolicyGridSize);

  bool contains(Cell c) const { return c.row >= 0 && c.col >= 0 && c.row < size && c.col < size; }
  Cell cell_of(double x, double y) const;
  /// World (x, y) of the cell center.
  std::pair<double, double> center_of(Cell c) const;
};

/// K x K top-down map of unknown / free / occupied cells with the agent cell.
class ExplorationGrid {
 public:
  ExplorationGrid() = default;
  explicit ExplorationGrid(int size, CellState fill = CellState::Unknown);

  int size() const { return size_; }
  bool in_bounds(Cell c) const {
    return c.row >= 0 && c.col >= 0 && c.row < size_ && c.col < size_;
  }
  CellState at(Cell c) const { return cells_[index(c)]; }
  void set(Cell c, CellState s) { cells_[index(c)] = s; }

  Cell agent() const { return agent_; }
  /// Places the agent; its cell is forced free.
  void set_agent(Cell c);

  std::size_t count(CellState s) const;

 private:
  std::size_t index(Cell c) const {
    return static_cast<std::size_t>(c.row) * static_cast<std::size_t>(size_) + c.col;
  }

  int size_ = 0;
  std::vector<CellState> cells_;
  Cell agent_;
};

/// What the agent has learned about the scene, tracked per voxel column. A
/// column becomes known once any camera ray enters it; known columns report
/// their true blocked status.
class OccupancyKnowledge {
 public:
  explicit OccupancyKnowledge(const Scene& scene);

  void update(const Observation& obs);
  bool known(int x, int y) const;
  std::size_t known_count() const;

  ExplorationGrid to_grid(const GridFrame& frame, const Vec3& agent_position) const;

 private:
  const Scene* scene_;
  std::vector<std::uint8_t> known_;
};

}  // namespace embcap
