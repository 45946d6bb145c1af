#include "embcap/exploration.hpp"

#include <algorithm>
#include <deque>
#include <limits>
#include <map>
#include <queue>
#include <tuple>

namespace embcap {

namespace {

constexpr std::array<Cell, 4> kSteps4{{{-1, 0}, {0, -1}, {0, 1}, {1, 0}}};

Cell offset(Cell c, Cell d) { return {c.row + d.row, c.col + d.col}; }

int entry_cost(CellState s, int unknown_cost) {
  return s == CellState::Unknown ? unknown_cost : 1;
}

}  // namespace

std::vector<Cell> plan_path(const ExplorationGrid& grid, Cell start, Cell goal, int unknown_cost) {
  if (!grid.in_bounds(start) || !grid.in_bounds(goal)) {
    throw ContractError("plan_path: start or goal outside the grid");
  }
  if (unknown_cost < 1) throw ContractError("plan_path: unknown cost must be >= 1");
  if (grid.at(start) == CellState::Occupied) throw ContractError("plan_path: start is occupied");
  if (grid.at(goal) == CellState::Occupied) throw NoPathError("goal cell is occupied");
  if (start == goal) return {};

  const int k = grid.size();
  auto idx = [k](Cell c) { return static_cast<std::size_t>(c.row) * k + c.col; };
  constexpr long kInf = std::numeric_limits<long>::max();
  std::vector<long> dist(static_cast<std::size_t>(k) * k, kInf);
  std::vector<int> parent(dist.size(), -1);
  using Entry = std::tuple<long, int, int>;
  std::priority_queue<Entry, std::vector<Entry>, std::greater<>> open;
  dist[idx(start)] = 0;
  open.emplace(0, start.row, start.col);
  while (!open.empty()) {
    const auto [d, r, c] = open.top();
    open.pop();
    const Cell cur{r, c};
    if (d != dist[idx(cur)]) continue;
    if (cur == goal) break;
    for (const Cell& s : kSteps4) {
      const Cell n = offset(cur, s);
      if (!grid.in_bounds(n) || grid.at(n) == CellState::Occupied) continue;
      const long nd = d + entry_cost(grid.at(n), unknown_cost);
      if (nd < dist[idx(n)]) {
        dist[idx(n)] = nd;
        parent[idx(n)] = static_cast<int>(idx(cur));
        open.emplace(nd, n.row, n.col);
      }
    }
  }
  if (dist[idx(goal)] == kInf) throw NoPathError("goal is unreachable");

  std::vector<Cell> path;
  for (int at = static_cast<int>(idx(goal)); at != static_cast<int>(idx(start)); at = parent[at]) {
    path.push_back({at / k, at % k});
  }
  std::reverse(path.begin(), path.end());
  return path;
}

long path_cost(const ExplorationGrid& grid, const std::vector<Cell>& path, int unknown_cost) {
  long total = 0;
  for (const Cell& c : path) total += entry_cost(grid.at(c), unknown_cost);
  return total;
}

std::vector<std::uint8_t> reachable_mask(const ExplorationGrid& grid) {
  const int k = grid.size();
  std::vector<std::uint8_t> seen(static_cast<std::size_t>(k) * k, 0);
  const Cell a = grid.agent();
  if (!grid.in_bounds(a) || grid.at(a) == CellState::Occupied) return seen;
  std::deque<Cell> queue{a};
  seen[static_cast<std::size_t>(a.row) * k + a.col] = 1;
  while (!queue.empty()) {
    const Cell cur = queue.front();
    queue.pop_front();
    for (const Cell& s : kSteps4) {
      const Cell n = offset(cur, s);
      if (!grid.in_bounds(n) || grid.at(n) == CellState::Occupied) continue;
      auto& flag = seen[static_cast<std::size_t>(n.row) * k + n.col];
      if (flag) continue;
      flag = 1;
      queue.push_back(n);
    }
  }
  return seen;
}

Cell random_goal_policy(const ExplorationGrid& grid, Rng& rng) {
  const auto reach = reachable_mask(grid);
  std::vector<Cell> candidates;
  for (int r = 0; r < grid.size(); ++r) {
    for (int c = 0; c < grid.size(); ++c) {
      if (reach[static_cast<std::size_t>(r) * grid.size() + c] && grid.at({r, c}) == CellState::Free) {
        candidates.push_back({r, c});
      }
    }
  }
  if (candidates.empty()) throw NoGoalError("no reachable free cell");
  return candidates[rng.uniform_index(candidates.size())];
}

Cell frontier_policy(const ExplorationGrid& grid) {
  std::optional<Cell> best;
  int best_score = -1;
  for (int r = 0; r < grid.size(); ++r) {
    for (int c = 0; c < grid.size(); ++c) {
      const Cell cell{r, c};
      if (grid.at(cell) != CellState::Free) continue;
      bool frontier = false;
      for (const Cell& s : kSteps4) {
        const Cell n = offset(cell, s);
        if (grid.in_bounds(n) && grid.at(n) == CellState::Unknown) frontier = true;
      }
      if (!frontier) continue;
      int score = 0;
      for (int dr = -1; dr <= 1; ++dr) {
        for (int dc = -1; dc <= 1; ++dc) {
          const Cell n{r + dr, c + dc};
          if ((dr != 0 || dc != 0) && grid.in_bounds(n) && grid.at(n) == CellState::Unknown) ++score;
        }
      }
      if (score > best_score) {
        best_score = score;
        best = cell;
      }
    }
  }
  if (!best) throw ExplorationComplete("no frontier left");
  return *best;
}

double window_mass(const PolicyState& state, Cell c, int radius) {
  double total = 0.0;
  for (int r = std::max(0, c.row - radius); r <= std::min(state.size - 1, c.row + radius); ++r) {
    for (int q = std::max(0, c.col - radius); q <= std::min(state.size - 1, c.col + radius); ++q) {
      total += state.disagreement[static_cast<std::size_t>(r) * state.size + q];
    }
  }
  return total;
}

Cell cla_greedy_policy(const PolicyState& state, const ExplorationGrid& grid, int radius) {
  if (state.size != grid.size()) throw ContractError("policy state and grid sizes differ");
  if (radius < 0) throw ContractError("window radius must be non-negative");
  const int k = state.size;
  // Summed-area table so each window costs O(1).
  std::vector<double> sat(static_cast<std::size_t>(k + 1) * (k + 1), 0.0);
  auto at = [k](std::vector<double>& v, int r, int c) -> double& {
    return v[static_cast<std::size_t>(r) * (k + 1) + c];
  };
  for (int r = 0; r < k; ++r) {
    for (int c = 0; c < k; ++c) {
      at(sat, r + 1, c + 1) = state.disagreement[static_cast<std::size_t>(r) * k + c] +
                              at(sat, r, c + 1) + at(sat, r + 1, c) - at(sat, r, c);
    }
  }
  const auto reach = reachable_mask(grid);
  std::optional<Cell> best;
  double best_mass = 0.0;
  for (int r = 0; r < k; ++r) {
    for (int c = 0; c < k; ++c) {
      if (!reach[static_cast<std::size_t>(r) * k + c] || grid.at({r, c}) != CellState::Free) continue;
      const int r0 = std::max(0, r - radius), r1 = std::min(k - 1, r + radius) + 1;
      const int c0 = std::max(0, c - radius), c1 = std::min(k - 1, c + radius) + 1;
      const double mass = at(sat, r1, c1) - at(sat, r0, c1) - at(sat, r1, c0) + at(sat, r0, c0);
      // Rounding in the table can leave tiny positive residue on empty windows.
      if (mass > best_mass + 1e-12) {
        best_mass = mass;
        best = Cell{r, c};
      }
    }
  }
  if (!best) return frontier_policy(grid);
  return *best;
}

std::string_view policy_name(PolicyKind p) {
  switch (p) {
    case PolicyKind::Random: return "random";
    case PolicyKind::Frontier: return "frontier";
    case PolicyKind::Cla: return "cla";
  }
  return "unknown";
}

PolicyKind policy_from_name(std::string_view name) {
  if (name == "random" || name == "random_goal") return PolicyKind::Random;
  if (name == "frontier") return PolicyKind::Frontier;
  if (name == "cla" || name == "cla_greedy") return PolicyKind::Cla;
  throw ConfigError("unknown policy: " + std::string(name));
}

// ---------------------------------------------------------------------------
// Episode loop
// ---------------------------------------------------------------------------

namespace {

double wrap_pi(double a) {
  a = normalize_angle(a);
  return a > std::numbers::pi ? a - kTwoPi : a;
}

bool segment_clear(const ExplorationGrid& grid, const GridFrame& frame, double x0, double y0,
                   double x1, double y1) {
  const double len = std::hypot(x1 - x0, y1 - y0);
  const int n = std::max(1, static_cast<int>(std::ceil(len / (frame.cell_m * 0.25))));
  for (int i = 0; i <= n; ++i) {
    const double t = static_cast<double>(i) / n;
    const Cell c = frame.cell_of(x0 + t * (x1 - x0), y0 + t * (y1 - y0));
    if (!grid.in_bounds(c) || grid.at(c) == CellState::Occupied) return false;
  }
  return true;
}

class EpisodeRunner {
 public:
  EpisodeRunner(const Scene& scene, const EpisodeConfig& cfg, std::uint64_t seed, Captioner& captioner,
                const Embedder& embedder)
      : scene_(scene),
        cfg_(cfg),
        captioner_(captioner),
        embedder_(embedder),
        frame_(GridFrame::for_scene(scene, cfg.grid_size)),
        knowledge_(scene),
        map_(scene.cell_size()) {
    Rng root(seed);
    Rng start_rng = root.split(1);
    det_rng_ = root.split(2);
    cap_rng_ = root.split(3);
    policy_rng_ = root.split(4);
    agent_ = random_free_pose(scene, cfg.camera, start_rng);
    log_.policy = std::string(policy_name(cfg.policy));
    log_.seed = seed;
    log_.n_steps = cfg.n_steps;
    log_.scene_seed = scene.seed();
    log_.camera = cfg.camera;
    log_.map_resolution = scene.cell_size();
    log_.start = agent_;
  }

  EpisodeResult run() {
    for (int step = 0; step < cfg_.n_steps; ++step) {
      StepRecord rec;
      rec.step = step;
      std::optional<Action> action;
      try {
        action = choose_action(rec);
      } catch (const ExplorationComplete&) {
        log_.completed_early = true;
        break;
      }
      agent_ = step_agent(scene_, agent_, *action);
      ++goal_age_;
      if (const auto* f = std::get_if<Forward>(&*action)) {
        rec.action = "forward";
        rec.action_value = f->meters;
      } else {
        rec.action = "rotate";
        rec.action_value = std::get<Rotate>(*action).radians;
      }
      perceive(rec);
      log_.records.push_back(std::move(rec));
    }
    EpisodeResult out;
    out.log = std::move(log_);
    out.map = std::move(map_);
    out.known_columns = knowledge_.known_count();
    return out;
  }

 private:
  Action choose_action(StepRecord& rec) {
    ExplorationGrid grid = knowledge_.to_grid(frame_, agent_.position);
    const Cell here = grid.agent();

    if (pending_.empty() && goal_ && here == *goal_) {
      if (cfg_.policy == PolicyKind::Cla && cfg_.cla_tabu > 0) {
        visited_goals_.push_back(*goal_);
        while (static_cast<int>(visited_goals_.size()) > cfg_.cla_tabu) visited_goals_.pop_front();
      }
      goal_.reset();
      next_reason_ = "arrived";
      if (cfg_.look_around) {
        for (int i = 0; i < 4; ++i) pending_.push_back(Rotate{std::numbers::pi / 2.0});
      }
    }
    if (!pending_.empty()) {
      const Action a = pending_.front();
      pending_.pop_front();
      return a;
    }

    if (goal_ && goal_age_ >= cfg_.staleness_steps) {
      goal_.reset();
      next_reason_ = "stale";
    }
    if (!goal_) select_goal(grid, rec, next_reason_);

    std::vector<Cell> path;
    try {
      path = plan_path(grid, here, *goal_, cfg_.unknown_cost);
    } catch (const NoPathError&) {
      // Only frontier goals can be unreachable; retry with a random reachable goal.
      goal_ = random_goal_policy(grid, policy_rng_);
      goal_age_ = 0;
      rec.goal_event = GoalEvent{*goal_, "no_path"};
      path = plan_path(grid, here, *goal_, cfg_.unknown_cost);
    }
    if (path.empty()) return Rotate{std::numbers::pi / 2.0};
    return follow(grid, path);
  }

  void select_goal(const ExplorationGrid& grid, StepRecord& rec, const std::string& reason) {
    Cell g;
    switch (cfg_.policy) {
      case PolicyKind::Random: g = random_goal_policy(grid, policy_rng_); break;
      case PolicyKind::Frontier: g = frontier_policy(grid); break;
      case PolicyKind::Cla: g = cla_greedy_policy(policy_state(grid), grid, cfg_.cla_radius); break;
    }
    goal_ = g;
    goal_age_ = 0;
    rec.goal_event = GoalEvent{g, reason};
  }

  PolicyState policy_state(const ExplorationGrid& grid) {
    const auto instances = cluster_objects(map_);
    std::vector<double> scores;
    scores.reserve(instances.size());
    for (const auto& inst : instances) {
      scores.push_back(object_disagreement(
          inst, [this](std::uint64_t id) -> const Embedding& { return embeddings_.at(id); }));
    }
    PolicyState st = disagreement_map(map_, instances, scores, agent_, grid, frame_);
    // Mass around the most recently reached goals is masked; without this
    // the greedy choice keeps returning to the same spot.
    const int r = cfg_.cla_tabu_radius;
    for (const Cell& v : visited_goals_) {
      for (int row = std::max(0, v.row - r); row <= std::min(st.size - 1, v.row + r); ++row) {
        for (int col = std::max(0, v.col - r); col <= std::min(st.size - 1, v.col + r); ++col) {
          st.disagreement[static_cast<std::size_t>(row) * st.size + col] = 0.0;
        }
      }
    }
    return st;
  }

  Action follow(const ExplorationGrid& grid, const std::vector<Cell>& path) {
    const double x0 = agent_.position.x, y0 = agent_.position.y;
    std::size_t pick = 0;
    const std::size_t horizon = std::min<std::size_t>(path.size(), 16);
    for (std::size_t i = 0; i < horizon; ++i) {
      const auto [x, y] = frame_.center_of(path[i]);
      if (segment_clear(grid, frame_, x0, y0, x, y)) pick = i;
    }
    const auto [tx, ty] = frame_.center_of(path[pick]);
    const double dist = std::hypot(tx - x0, ty - y0);
    if (dist < 1e-9) return Rotate{std::numbers::pi / 2.0};
    const double turn = wrap_pi(std::atan2(ty - y0, tx - x0) - agent_.yaw);
    if (std::abs(turn) > kHeadingTolerance) return Rotate{turn};
    return Forward{std::min(cfg_.forward_step, dist)};
  }

  void perceive(StepRecord& rec) {
    const Observation obs = observe(scene_, agent_, cfg_.camera);
    knowledge_.update(obs);
    rec.agent = agent_;
    rec.camera_pose = obs.camera_pose;
    rec.hit_pixels = static_cast<int>(
        std::count_if(obs.depth.begin(), obs.depth.end(), [](double d) { return std::isfinite(d); }));
    rec.seen_columns = static_cast<int>(obs.seen_columns.size());

    auto raw = detect(obs, scene_, cfg_.detector, det_rng_, next_view_id_);
    next_view_id_ += raw.size();
    auto dets = filter_detections(std::move(raw), cfg_.filter, obs.width, obs.height);
    dets = nms(reproject_boxes(std::move(dets), obs, cfg_.detector.bbox_margin), cfg_.filter.nms_iou);

    std::vector<CaptionRecord> caps;
    caps.reserve(dets.size());
    for (const auto& d : dets) {
      CaptionRecord c = captioner_.describe(scene_.objects().at(d.object_id_gt), d.visible_fraction, cap_rng_);
      c.id = next_caption_id_++;
      c.object_id_gt = d.object_id_gt;
      c.view_pose = obs.camera_pose;
      c.visible_fraction = d.visible_fraction;
      c.label = d.label();
      embeddings_.emplace(c.id, embedder_.embed(c.text));
      caps.push_back(std::move(c));
    }
    integrate(map_, obs, dets, caps);

    for (std::size_t i = 0; i < dets.size(); ++i) {
      LoggedDetection ld;
      for (int p : dets[i].mask_pixels()) {
        if (!std::isfinite(obs.depth[p])) continue;
        ld.pixels.push_back(p);
        ld.depths.push_back(obs.depth[p]);
      }
      ld.det = std::move(dets[i]);
      ld.det.mask.clear();
      rec.detections.push_back(std::move(ld));
    }
    rec.captions = std::move(caps);
  }

  static constexpr double kHeadingTolerance = 0.2;

  const Scene& scene_;
  const EpisodeConfig& cfg_;
  Captioner& captioner_;
  const Embedder& embedder_;
  GridFrame frame_;
  OccupancyKnowledge knowledge_;
  SemanticVoxelMap map_;
  Rng det_rng_, cap_rng_, policy_rng_;
  AgentState agent_;
  EpisodeLog log_;

  std::optional<Cell> goal_;
  int goal_age_ = 0;
  std::string next_reason_ = "start";
  std::deque<Action> pending_;
  std::deque<Cell> visited_goals_;
  std::uint64_t next_view_id_ = 0;
  std::uint64_t next_caption_id_ = 0;
  std::map<std::uint64_t, Embedding> embeddings_;
};

}  // namespace

EpisodeResult run_episode(const Scene& scene, const EpisodeConfig& cfg, std::uint64_t seed,
                          Captioner& captioner, const Embedder& embedder) {
  if (cfg.n_steps < 0) throw ContractError("n_steps must be non-negative");
  if (cfg.grid_size < 1) throw ContractError("grid size must be positive");
  return EpisodeRunner(scene, cfg, seed, captioner, embedder).run();
}

SemanticVoxelMap replay_map(const EpisodeLog& log) {
  SemanticVoxelMap map(log.map_resolution);
  const auto& cam = log.camera;
  const std::size_t n = static_cast<std::size_t>(cam.width) * cam.height;
  for (const auto& rec : log.records) {
    if (rec.detections.empty()) continue;
    Observation obs;
    obs.width = cam.width;
    obs.height = cam.height;
    obs.fov = cam.fov;
    obs.max_range = cam.max_range;
    obs.camera_pose = rec.camera_pose;
    obs.depth.assign(n, std::numeric_limits<double>::infinity());
    std::vector<Detection> dets;
    for (const auto& ld : rec.detections) {
      Detection d = ld.det;
      d.mask.assign(n, 0);
      for (std::size_t i = 0; i < ld.pixels.size(); ++i) {
        d.mask[ld.pixels[i]] = 1;
        obs.depth[ld.pixels[i]] = ld.depths[i];
      }
      dets.push_back(std::move(d));
    }
    integrate(map, obs, dets, rec.captions);
  }
  return map;
}

std::vector<CaptionRecord> all_captions(const EpisodeLog& log) {
  std::vector<CaptionRecord> out;
  for (const auto& rec : log.records) out.insert(out.end(), rec.captions.begin(), rec.captions.end());
  return out;
}

}  // namespace embcap
