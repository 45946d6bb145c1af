#include "embcap/grid.hpp"

#include <algorithm>

namespace embcap {

GridFrame GridFrame::for_scene(const Scene& scene, int size) {
  const auto& b = scene.bounds();
  GridFrame f;
  f.size = size;
  f.cell_m = std::max(b.nx, b.ny) * scene.cell_size() / size;
  return f;
}

Cell GridFrame::cell_of(double x, double y) const {
  return {static_cast<int>(std::floor(y / cell_m)), static_cast<int>(std::floor(x / cell_m))};
}

std::pair<double, double> GridFrame::center_of(Cell c) const {
  return {(c.col + 0.5) * cell_m, (c.row + 0.5) * cell_m};
}

ExplorationGrid::ExplorationGrid(int size, CellState fill)
    : size_(size), cells_(static_cast<std::size_t>(size) * size, fill) {}

void ExplorationGrid::set_agent(Cell c) {
  agent_ = c;
  if (in_bounds(c)) set(c, CellState::Free);
}

std::size_t ExplorationGrid::count(CellState s) const {
  return static_cast<std::size_t>(std::count(cells_.begin(), cells_.end(), s));
}

OccupancyKnowledge::OccupancyKnowledge(const Scene& scene)
    : scene_(&scene),
      known_(static_cast<std::size_t>(scene.bounds().nx) * scene.bounds().ny, 0) {}

void OccupancyKnowledge::update(const Observation& obs) {
  for (int c : obs.seen_columns) known_.at(static_cast<std::size_t>(c)) = 1;
}

bool OccupancyKnowledge::known(int x, int y) const {
  const auto& b = scene_->bounds();
  if (x < 0 || y < 0 || x >= b.nx || y >= b.ny) return true;
  return known_[static_cast<std::size_t>(x) + static_cast<std::size_t>(b.nx) * y] != 0;
}

std::size_t OccupancyKnowledge::known_count() const {
  return static_cast<std::size_t>(std::count(known_.begin(), known_.end(), 1));
}

ExplorationGrid OccupancyKnowledge::to_grid(const GridFrame& frame, const Vec3& agent_position) const {
  ExplorationGrid grid(frame.size);
  const double cs = scene_->cell_size();
  for (int r = 0; r < frame.size; ++r) {
    for (int c = 0; c < frame.size; ++c) {
      const auto [x, y] = frame.center_of({r, c});
      const int vx = static_cast<int>(std::floor(x / cs));
      const int vy = static_cast<int>(std::floor(y / cs));
      CellState s = CellState::Unknown;
      if (known(vx, vy)) s = scene_->column_blocked(vx, vy) ? CellState::Occupied : CellState::Free;
      grid.set({r, c}, s);
    }
  }
  grid.set_agent(frame.cell_of(agent_position.x, agent_position.y));
  return grid;
}

}  // namespace embcap
