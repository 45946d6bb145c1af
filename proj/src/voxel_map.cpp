#include "embcap/voxel_map.hpp"

#include <algorithm>
#include <deque>
#include <set>

namespace embcap {

int VoxelCell::label() const {
  if (logit_sum.empty()) return -1;
  return static_cast<int>(std::max_element(logit_sum.begin(), logit_sum.end()) - logit_sum.begin());
}

SemanticVoxelMap::SemanticVoxelMap(double resolution, int num_classes)
    : resolution_(resolution), num_classes_(num_classes) {
  if (resolution <= 0.0) throw ContractError("map resolution must be positive");
}

const VoxelCell* SemanticVoxelMap::find(VoxelKey k) const {
  auto it = cells_.find(k);
  return it == cells_.end() ? nullptr : &it->second;
}

VoxelCell& SemanticVoxelMap::add_hit(VoxelKey k, std::span<const double> logits) {
  if (static_cast<int>(logits.size()) != num_classes_) {
    throw ContractError("logits length does not match the map's class count");
  }
  auto& cell = cells_[k];
  if (cell.logit_sum.empty()) cell.logit_sum.assign(num_classes_, 0.0);
  for (int c = 0; c < num_classes_; ++c) cell.logit_sum[c] += logits[c];
  ++cell.hit_count;
  return cell;
}

void SemanticVoxelMap::put(VoxelKey k, VoxelCell cell) {
  if (static_cast<int>(cell.logit_sum.size()) != num_classes_) {
    throw ContractError("logits length does not match the map's class count");
  }
  cells_[k] = std::move(cell);
}

bool operator==(const SemanticVoxelMap& a, const SemanticVoxelMap& b) {
  if (a.resolution_ != b.resolution_ || a.num_classes_ != b.num_classes_) return false;
  if (a.cells_.size() != b.cells_.size()) return false;
  auto ia = a.cells_.begin();
  auto ib = b.cells_.begin();
  for (; ia != a.cells_.end(); ++ia, ++ib) {
    if (ia->first != ib->first) return false;
    const auto& ca = ia->second;
    const auto& cb = ib->second;
    if (ca.hit_count != cb.hit_count || ca.logit_sum != cb.logit_sum ||
        ca.caption_refs != cb.caption_refs) {
      return false;
    }
  }
  return true;
}

VoxelKey back_project(const Observation& obs, int pixel, double resolution) {
  const int u = pixel % obs.width;
  const int v = pixel / obs.width;
  const Vec3 dir = pixel_ray(obs.camera_pose, obs.fov, obs.width, obs.height, u, v);
  // The recorded depth is the entry distance; step a hair further so the
  // point lies inside the hit voxel rather than on its face.
  const double t = obs.depth[static_cast<std::size_t>(pixel)] + 1e-6 * resolution;
  const Vec3 p = obs.camera_pose.position + t * dir;
  return {static_cast<int>(std::floor(p.x / resolution)), static_cast<int>(std::floor(p.y / resolution)),
          static_cast<int>(std::floor(p.z / resolution))};
}

void integrate(SemanticVoxelMap& map, const Observation& obs, std::span<const Detection> dets,
               std::span<const CaptionRecord> captions) {
  if (dets.size() != captions.size()) {
    throw ContractError("integrate: detections and captions are misaligned");
  }
  for (std::size_t i = 0; i < dets.size(); ++i) {
    const auto& det = dets[i];
    std::set<VoxelKey> touched;
    for (int p : det.mask_pixels()) {
      if (!std::isfinite(obs.depth[static_cast<std::size_t>(p)])) continue;
      const VoxelKey k = back_project(obs, p, map.resolution());
      auto& cell = map.add_hit(k, det.logits);
      if (touched.insert(k).second) cell.caption_refs.push_back(captions[i].id);
    }
  }
}

std::vector<ObjectInstance> cluster_objects(const SemanticVoxelMap& map) {
  std::vector<ObjectInstance> out;
  std::map<VoxelKey, int> assigned;
  for (const auto& [key, cell] : map.cells()) {
    if (assigned.count(key)) continue;
    const int label = cell.label();
    ObjectInstance inst;
    inst.instance_id = static_cast<int>(out.size());
    inst.pseudo_label = label;
    std::set<std::uint64_t> caps;
    std::deque<VoxelKey> queue{key};
    assigned[key] = inst.instance_id;
    while (!queue.empty()) {
      const VoxelKey v = queue.front();
      queue.pop_front();
      inst.voxels.push_back(v);
      const VoxelCell* vc = map.find(v);
      caps.insert(vc->caption_refs.begin(), vc->caption_refs.end());
      for (int dz = -1; dz <= 1; ++dz) {
        for (int dy = -1; dy <= 1; ++dy) {
          for (int dx = -1; dx <= 1; ++dx) {
            if (dx == 0 && dy == 0 && dz == 0) continue;
            const VoxelKey n{v.x + dx, v.y + dy, v.z + dz};
            if (assigned.count(n)) continue;
            const VoxelCell* nc = map.find(n);
            if (nc == nullptr || nc->label() != label) continue;
            assigned[n] = inst.instance_id;
            queue.push_back(n);
          }
        }
      }
    }
    std::sort(inst.voxels.begin(), inst.voxels.end());
    inst.captions.assign(caps.begin(), caps.end());
    out.push_back(std::move(inst));
  }
  return out;
}

double object_disagreement(std::span<const Embedding> embeddings) {
  const std::size_t n = embeddings.size();
  if (n < 2) return 0.0;
  const std::size_t dim = embeddings.front().values.size();
  // Sum over pairs of cos(i, j) = (|sum v|^2 - sum |v|^2) / 2 for unit or zero vectors.
  std::vector<double> sum(dim, 0.0);
  double self = 0.0;
  for (const auto& e : embeddings) {
    if (e.values.size() != dim) throw ContractError("embedding dimensions differ");
    double n2 = 0.0;
    for (double v : e.values) n2 += v * v;
    const double inv = n2 > 0.0 ? 1.0 / std::sqrt(n2) : 0.0;
    for (std::size_t d = 0; d < dim; ++d) sum[d] += e.values[d] * inv;
    self += n2 > 0.0 ? 1.0 : 0.0;
  }
  double total = 0.0;
  for (double v : sum) total += v * v;
  const double pairs = static_cast<double>(n) * (n - 1) / 2.0;
  const double mean_cos = (total - self) / 2.0 / pairs;
  return std::clamp((1.0 - mean_cos) / 2.0, 0.0, 1.0);
}

double object_disagreement(const ObjectInstance& inst, const EmbeddingLookup& lookup) {
  std::vector<std::uint64_t> ids = inst.captions;
  std::sort(ids.begin(), ids.end());
  ids.erase(std::unique(ids.begin(), ids.end()), ids.end());
  std::vector<Embedding> es;
  es.reserve(ids.size());
  for (auto id : ids) es.push_back(lookup(id));
  return object_disagreement(es);
}

PolicyState disagreement_map(const SemanticVoxelMap& map, std::span<const ObjectInstance> instances,
                             std::span<const double> disagreements, const AgentState& agent,
                             const ExplorationGrid& explored, const GridFrame& frame) {
  if (instances.size() != disagreements.size()) {
    throw ContractError("disagreement_map: values misaligned with instances");
  }
  PolicyState st;
  st.size = frame.size;
  const std::size_t n = static_cast<std::size_t>(frame.size) * frame.size;
  st.disagreement.assign(n, 0.0);
  st.explored.assign(n, 0.0);
  st.orientation = agent.yaw;

  const double res = map.resolution();
  for (std::size_t i = 0; i < instances.size(); ++i) {
    const double value = std::clamp(disagreements[i], 0.0, 1.0);
    if (value <= 0.0) continue;
    std::set<std::pair<int, int>> columns;
    for (const auto& v : instances[i].voxels) columns.insert({v.x, v.y});
    for (const auto& [vx, vy] : columns) {
      // Grid cells whose centers fall inside the voxel column's footprint;
      // the nearest cell if the grid is coarser than the voxels.
      const double x0 = vx * res, x1 = (vx + 1) * res;
      const double y0 = vy * res, y1 = (vy + 1) * res;
      int c0 = static_cast<int>(std::ceil(x0 / frame.cell_m - 0.5));
      int c1 = static_cast<int>(std::ceil(x1 / frame.cell_m - 0.5)) - 1;
      int r0 = static_cast<int>(std::ceil(y0 / frame.cell_m - 0.5));
      int r1 = static_cast<int>(std::ceil(y1 / frame.cell_m - 0.5)) - 1;
      if (c1 < c0) c0 = c1 = static_cast<int>(std::floor((x0 + x1) / 2.0 / frame.cell_m));
      if (r1 < r0) r0 = r1 = static_cast<int>(std::floor((y0 + y1) / 2.0 / frame.cell_m));
      for (int r = std::max(0, r0); r <= std::min(frame.size - 1, r1); ++r) {
        for (int c = std::max(0, c0); c <= std::min(frame.size - 1, c1); ++c) {
          double& cell = st.disagreement[static_cast<std::size_t>(r) * frame.size + c];
          cell = std::max(cell, value);
        }
      }
    }
  }

  for (int r = 0; r < frame.size && r < explored.size(); ++r) {
    for (int c = 0; c < frame.size && c < explored.size(); ++c) {
      if (explored.at({r, c}) != CellState::Unknown) {
        st.explored[static_cast<std::size_t>(r) * frame.size + c] = 1.0;
      }
    }
  }
  const Cell a = frame.cell_of(agent.position.x, agent.position.y);
  if (frame.contains(a)) st.explored[static_cast<std::size_t>(a.row) * frame.size + a.col] = kAgentMarker;
  return st;
}

}  // namespace embcap
