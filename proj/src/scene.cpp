#include "embcap/scene.hpp"

#include <algorithm>
#include <array>
#include <limits>
#include <set>

#include "embcap/lexicon.hpp"

namespace embcap {

namespace {

constexpr std::array<std::string_view, kNumClasses> kCategoryNames = {
    "couch", "potted plant", "bed", "toilet", "tv", "table"};

struct BoxShape {
  int dx, dy, dz, z0;
};

int pick(Rng& rng, int lo, int hi) {
  return lo + static_cast<int>(rng.uniform_index(static_cast<std::uint64_t>(hi - lo + 1)));
}

BoxShape sample_shape(Category c, Rng& rng) {
  BoxShape s{};
  switch (c) {
    case Category::Couch: s = {pick(rng, 3, 4), 2, 2, 0}; break;
    case Category::PottedPlant: {
      const int w = pick(rng, 1, 2);
      s = {w, w, pick(rng, 3, 4), 0};
      break;
    }
    case Category::Bed: s = {pick(rng, 4, 6), pick(rng, 3, 4), 2, 0}; break;
    case Category::Toilet: s = {2, pick(rng, 1, 2), 2, 0}; break;
    case Category::Tv: s = {pick(rng, 2, 3), 1, 2, 2}; break;
    case Category::Table: s = {pick(rng, 2, 4), pick(rng, 2, 3), 3, 0}; break;
  }
  if (rng.bernoulli(0.5)) std::swap(s.dx, s.dy);
  return s;
}

// Minimum footprint volume per category, used for the feasibility precheck.
int min_volume(Category c) {
  switch (c) {
    case Category::Couch: return 3 * 2 * 2;
    case Category::PottedPlant: return 3;
    case Category::Bed: return 4 * 3 * 2;
    case Category::Toilet: return 2 * 1 * 2;
    case Category::Tv: return 2 * 1 * 2;
    case Category::Table: return 2 * 2 * 3;
  }
  return 1;
}

void build_rooms(Scene& scene, const SceneSpec& spec) {
  const auto [nx, ny, nz] = spec.bounds;
  auto wall_column = [&](int x, int y) {
    for (int z = 0; z < nz; ++z) scene.add_structure({x, y, z});
  };
  for (int x = 0; x < nx; ++x) {
    wall_column(x, 0);
    wall_column(x, ny - 1);
  }
  for (int y = 1; y < ny - 1; ++y) {
    wall_column(0, y);
    wall_column(nx - 1, y);
  }
  const int rx = std::max(1, spec.rooms_x);
  const int ry = std::max(1, spec.rooms_y);
  std::vector<int> xs{0}, ys{0};
  for (int i = 1; i < rx; ++i) xs.push_back(i * (nx - 1) / rx);
  for (int j = 1; j < ry; ++j) ys.push_back(j * (ny - 1) / ry);
  xs.push_back(nx - 1);
  ys.push_back(ny - 1);

  // Interior walls with one centered door per room-to-room segment.
  for (int i = 1; i < rx; ++i) {
    const int x = xs[i];
    for (int j = 0; j < ry; ++j) {
      const int lo = ys[j] + 1, hi = ys[j + 1] - 1;
      const int mid = (lo + hi) / 2;
      for (int y = lo; y <= hi; ++y) {
        const bool door = std::abs(y - mid) * 2 < spec.door_width;
        if (!door) wall_column(x, y);
      }
    }
  }
  for (int j = 1; j < ry; ++j) {
    const int y = ys[j];
    for (int i = 0; i < rx; ++i) {
      const int lo = xs[i] + 1, hi = xs[i + 1] - 1;
      const int mid = (lo + hi) / 2;
      for (int x = lo; x <= hi; ++x) {
        const bool door = std::abs(x - mid) * 2 < spec.door_width;
        if (!door && !scene.occupied({x, y, 0})) wall_column(x, y);
      }
    }
  }
}

ObjectGT make_object(Category c, Rng& rng) {
  ObjectGT obj;
  obj.category = c;
  const auto colors = lexicon::colors();
  const auto mats = lexicon::materials(c);
  const auto ctxs = lexicon::contexts();
  const auto color = colors[rng.uniform_index(colors.size())];
  const auto material = mats[rng.uniform_index(mats.size())];
  const auto& ctx = ctxs[rng.uniform_index(ctxs.size())];
  obj.attribute_tokens = {std::string(color), std::string(material), std::string(ctx.noun)};
  obj.gt_caption = lexicon::render_caption(color, material, c, ctx.phrase);
  obj.difficulty = rng.uniform();
  return obj;
}

}  // namespace

std::string_view category_name(Category c) { return kCategoryNames.at(static_cast<int>(c)); }

std::optional<Category> category_from_name(std::string_view name) {
  for (int i = 0; i < kNumClasses; ++i) {
    if (kCategoryNames[i] == name) return static_cast<Category>(i);
  }
  return std::nullopt;
}

// ---------------------------------------------------------------------------
// Scene
// ---------------------------------------------------------------------------

Scene::Scene(Bounds bounds, double cell_size, std::uint64_t seed)
    : bounds_(bounds), cell_size_(cell_size), seed_(seed) {
  if (bounds.nx <= 0 || bounds.ny <= 0 || bounds.nz <= 0) {
    throw GenerationError("scene bounds must be positive");
  }
  owner_.assign(static_cast<std::size_t>(bounds.nx) * bounds.ny * bounds.nz, kFree);
  column_blocked_.assign(static_cast<std::size_t>(bounds.nx) * bounds.ny, 0);
}

bool Scene::column_blocked(int x, int y) const {
  if (x < 0 || y < 0 || x >= bounds_.nx || y >= bounds_.ny) return true;
  return column_blocked_[static_cast<std::size_t>(x) + static_cast<std::size_t>(bounds_.nx) * y] != 0;
}

VoxelKey Scene::voxel_of(const Vec3& p) const {
  return {static_cast<int>(std::floor(p.x / cell_size_)),
          static_cast<int>(std::floor(p.y / cell_size_)),
          static_cast<int>(std::floor(p.z / cell_size_))};
}

Vec3 Scene::voxel_center(VoxelKey k) const {
  return {(k.x + 0.5) * cell_size_, (k.y + 0.5) * cell_size_, (k.z + 0.5) * cell_size_};
}

bool Scene::is_free(const Vec3& p) const {
  const VoxelKey k = voxel_of(p);
  if (!in_bounds(k)) return false;
  return !column_blocked(k.x, k.y);
}

void Scene::mark(VoxelKey k, int owner) {
  owner_[index(k)] = owner;
  column_blocked_[static_cast<std::size_t>(k.x) + static_cast<std::size_t>(bounds_.nx) * k.y] = 1;
}

void Scene::add_structure(VoxelKey k) {
  if (!in_bounds(k)) throw GenerationError("structure voxel out of bounds");
  const int cur = owner_[index(k)];
  if (cur >= 0) throw GenerationError("structure overlaps an object");
  mark(k, kStructure);
}

void Scene::add_object(ObjectGT obj) {
  if (obj.voxels.empty()) throw GenerationError("object without voxels");
  std::sort(obj.voxels.begin(), obj.voxels.end());
  if (std::adjacent_find(obj.voxels.begin(), obj.voxels.end()) != obj.voxels.end()) {
    throw GenerationError("object lists a voxel twice");
  }
  for (const auto& v : obj.voxels) {
    if (!in_bounds(v)) throw GenerationError("object voxel out of bounds");
    if (owner_[index(v)] != kFree) throw GenerationError("object overlaps occupied voxel");
  }
  const int id = static_cast<int>(objects_.size());
  obj.id = id;
  for (const auto& v : obj.voxels) mark(v, id);

  int surface = 0;
  const std::set<VoxelKey> members(obj.voxels.begin(), obj.voxels.end());
  static constexpr std::array<std::array<int, 3>, 6> kFaces = {
      {{1, 0, 0}, {-1, 0, 0}, {0, 1, 0}, {0, -1, 0}, {0, 0, 1}, {0, 0, -1}}};
  for (const auto& v : obj.voxels) {
    for (const auto& d : kFaces) {
      if (!members.count({v.x + d[0], v.y + d[1], v.z + d[2]})) {
        ++surface;
        break;
      }
    }
  }
  surface_counts_.push_back(surface);
  objects_.push_back(std::move(obj));
}

Scene generate_scene(std::uint64_t seed, const SceneSpec& spec) {
  const auto& b = spec.bounds;
  if (b.nx < 8 || b.ny < 8 || b.nz < 8) throw GenerationError("scene bounds must be at least 8^3");
  if (spec.n_objects < 1) throw GenerationError("scene needs at least one object");
  if (spec.cell_size <= 0.0) throw GenerationError("cell size must be positive");

  Rng rng(seed);
  Scene scene(b, spec.cell_size, seed);
  build_rooms(scene, spec);

  std::vector<Category> cats;
  long long needed = 0;
  for (int i = 0; i < spec.n_objects; ++i) {
    const auto c = static_cast<Category>(rng.uniform_index(kNumClasses));
    cats.push_back(c);
    needed += min_volume(c);
  }
  long long free_voxels = 0;
  for (int z = 0; z < b.nz; ++z) {
    for (int y = 0; y < b.ny; ++y) {
      for (int x = 0; x < b.nx; ++x) free_voxels += scene.occupied({x, y, z}) ? 0 : 1;
    }
  }
  if (needed > free_voxels) throw GenerationError("object volume exceeds free space");

  const int gap = std::max(0, spec.object_gap);
  for (Category c : cats) {
    bool placed = false;
    for (int attempt = 0; attempt < spec.max_attempts_per_object && !placed; ++attempt) {
      const BoxShape s = sample_shape(c, rng);
      if (s.dx + 2 * gap + 2 > b.nx || s.dy + 2 * gap + 2 > b.ny || s.z0 + s.dz > b.nz) continue;
      const int x0 = 1 + gap + static_cast<int>(rng.uniform_index(b.nx - s.dx - 2 * gap - 1));
      const int y0 = 1 + gap + static_cast<int>(rng.uniform_index(b.ny - s.dy - 2 * gap - 1));
      bool clear = true;
      for (int x = x0 - gap; x < x0 + s.dx + gap && clear; ++x) {
        for (int y = y0 - gap; y < y0 + s.dy + gap && clear; ++y) {
          if (scene.column_blocked(x, y)) clear = false;
        }
      }
      if (!clear) continue;
      ObjectGT obj = make_object(c, rng);
      for (int x = x0; x < x0 + s.dx; ++x) {
        for (int y = y0; y < y0 + s.dy; ++y) {
          for (int z = s.z0; z < s.z0 + s.dz; ++z) obj.voxels.push_back({x, y, z});
        }
      }
      scene.add_object(std::move(obj));
      placed = true;
    }
    if (!placed) throw GenerationError("could not place all objects; scene too crowded");
  }
  return scene;
}

// ---------------------------------------------------------------------------
// Rendering
// ---------------------------------------------------------------------------

Vec3 pixel_ray(const CameraPose& pose, double fov, int width, int height, int u, int v) {
  const double t = std::tan(fov / 2.0);
  const double cx = (2.0 * (u + 0.5) / width - 1.0) * t;
  const double cy = (1.0 - 2.0 * (v + 0.5) / height) * t * height / width;
  const double c = std::cos(pose.yaw), s = std::sin(pose.yaw);
  // forward (c, s, 0), right (s, -c, 0), up (0, 0, 1)
  Vec3 d{c + cx * s, s - cx * c, cy};
  return (1.0 / d.norm()) * d;
}

namespace {

struct RayHit {
  bool hit = false;
  double distance = std::numeric_limits<double>::infinity();
  VoxelKey voxel;
};

// Amanatides-Woo traversal in voxel units. Calls visit(column) for every
// voxel entered, including the hit voxel.
template <typename Visit>
RayHit cast_ray(const Scene& scene, const Vec3& origin, const Vec3& dir, double max_range,
                Visit&& visit) {
  const double cs = scene.cell_size();
  const Vec3 o{origin.x / cs, origin.y / cs, origin.z / cs};
  const double tmax_all = max_range / cs;
  VoxelKey k{static_cast<int>(std::floor(o.x)), static_cast<int>(std::floor(o.y)),
             static_cast<int>(std::floor(o.z))};
  const std::array<double, 3> oo{o.x, o.y, o.z};
  const std::array<double, 3> dd{dir.x, dir.y, dir.z};
  std::array<int, 3> cur{k.x, k.y, k.z};
  std::array<int, 3> step{};
  std::array<double, 3> t_max{};
  std::array<double, 3> t_delta{};
  constexpr double kInf = std::numeric_limits<double>::infinity();
  for (int a = 0; a < 3; ++a) {
    if (dd[a] > 0.0) {
      step[a] = 1;
      t_max[a] = (cur[a] + 1 - oo[a]) / dd[a];
      t_delta[a] = 1.0 / dd[a];
    } else if (dd[a] < 0.0) {
      step[a] = -1;
      t_max[a] = (oo[a] - cur[a]) / -dd[a];
      t_delta[a] = -1.0 / dd[a];
    } else {
      step[a] = 0;
      t_max[a] = kInf;
      t_delta[a] = kInf;
    }
  }
  double t_entry = 0.0;
  RayHit result;
  while (t_entry <= tmax_all) {
    const VoxelKey v{cur[0], cur[1], cur[2]};
    if (!scene.in_bounds(v)) break;
    visit(v);
    if (scene.occupied(v)) {
      result.hit = true;
      result.distance = t_entry * cs;
      result.voxel = v;
      return result;
    }
    int axis = 0;
    if (t_max[1] < t_max[axis]) axis = 1;
    if (t_max[2] < t_max[axis]) axis = 2;
    t_entry = t_max[axis];
    cur[axis] += step[axis];
    t_max[axis] += t_delta[axis];
  }
  return result;
}

}  // namespace

Observation observe(const Scene& scene, const AgentState& agent, const CameraConfig& camera) {
  if (!scene.is_free(agent.position) || scene.occupied(scene.voxel_of(agent.position))) {
    throw PoseError("camera pose is inside an occupied voxel column");
  }
  Observation obs;
  obs.width = camera.width;
  obs.height = camera.height;
  obs.fov = camera.fov;
  obs.max_range = camera.max_range;
  obs.camera_pose = {agent.position, agent.yaw};
  const std::size_t n = static_cast<std::size_t>(camera.width) * camera.height;
  obs.depth.assign(n, std::numeric_limits<double>::infinity());

  const auto& b = scene.bounds();
  std::vector<std::uint8_t> seen(static_cast<std::size_t>(b.nx) * b.ny, 0);
  std::vector<int> pixel_owner(n, -1);
  std::set<VoxelKey> hit_voxels;
  auto visit = [&](VoxelKey v) { seen[static_cast<std::size_t>(v.x) + static_cast<std::size_t>(b.nx) * v.y] = 1; };

  for (int v = 0; v < camera.height; ++v) {
    for (int u = 0; u < camera.width; ++u) {
      const Vec3 dir = pixel_ray(obs.camera_pose, camera.fov, camera.width, camera.height, u, v);
      const RayHit h = cast_ray(scene, agent.position, dir, camera.max_range, visit);
      if (!h.hit) continue;
      const std::size_t idx = static_cast<std::size_t>(v) * camera.width + u;
      obs.depth[idx] = h.distance;
      const int owner = scene.owner(h.voxel);
      if (owner >= 0) {
        pixel_owner[idx] = owner;
        hit_voxels.insert(h.voxel);
      }
    }
  }

  std::vector<Fragment> frags(scene.objects().size());
  for (std::size_t i = 0; i < n; ++i) {
    if (pixel_owner[i] >= 0) frags[pixel_owner[i]].pixels.push_back(static_cast<int>(i));
  }
  std::vector<int> hits_per_object(scene.objects().size(), 0);
  for (const auto& v : hit_voxels) ++hits_per_object[scene.owner(v)];
  for (std::size_t id = 0; id < frags.size(); ++id) {
    if (frags[id].pixels.empty()) continue;
    Fragment f = std::move(frags[id]);
    f.object_id = static_cast<int>(id);
    const int surface = scene.surface_voxel_count(static_cast<int>(id));
    f.visible_fraction =
        std::clamp(static_cast<double>(hits_per_object[id]) / std::max(1, surface), 0.0, 1.0);
    obs.visible_fragments.push_back(std::move(f));
  }
  for (std::size_t i = 0; i < seen.size(); ++i) {
    if (seen[i]) obs.seen_columns.push_back(static_cast<int>(i));
  }
  return obs;
}

AgentState step_agent(const Scene& scene, const AgentState& agent, const Action& action) {
  AgentState next = agent;
  next.step_index = agent.step_index + 1;
  if (const auto* rot = std::get_if<Rotate>(&action)) {
    next.yaw = normalize_angle(agent.yaw + rot->radians);
    return next;
  }
  const double d = std::max(0.0, std::get<Forward>(action).meters);
  const double inc = scene.cell_size() * 0.05;
  const Vec3 heading{std::cos(agent.yaw), std::sin(agent.yaw), 0.0};
  const int n = static_cast<int>(std::ceil(d / inc));
  for (int k = 1; k <= n; ++k) {
    const Vec3 p = agent.position + std::min(k * inc, d) * heading;
    if (!scene.is_free(p)) break;
    next.position = p;
  }
  return next;
}

AgentState random_free_pose(const Scene& scene, const CameraConfig& camera, Rng& rng) {
  const auto& b = scene.bounds();
  std::vector<int> free_cols;
  for (int y = 0; y < b.ny; ++y) {
    for (int x = 0; x < b.nx; ++x) {
      if (!scene.column_blocked(x, y)) free_cols.push_back(x + b.nx * y);
    }
  }
  if (free_cols.empty()) throw PoseError("scene has no free column");
  const int c = free_cols[rng.uniform_index(free_cols.size())];
  AgentState a;
  a.position = {(c % b.nx + 0.5) * scene.cell_size(), (c / b.nx + 0.5) * scene.cell_size(),
                camera.mount_height};
  a.yaw = normalize_angle(rng.uniform() * kTwoPi);
  return a;
}

}  // namespace embcap
