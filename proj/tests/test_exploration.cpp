#include <set>
#include "doctest.h"
#include "embcap/exploration.hpp"
#include "oracles.hpp"

using namespace embcap;

namespace {

ExplorationGrid random_grid(Rng& rng, int k, double p_occ, double p_unknown) {
  ExplorationGrid g(k, CellState::Free);
  for (int r = 0; r < k; ++r) {
    for (int c = 0; c < k; ++c) {
      const double u = rng.uniform();
      if (u < p_occ) g.set({r, c}, CellState::Occupied);
      else if (u < p_occ + p_unknown) g.set({r, c}, CellState::Unknown);
    }
  }
  return g;
}

Cell random_open(const ExplorationGrid& g, Rng& rng) {
  for (;;) {
    const Cell c{static_cast<int>(rng.uniform_index(g.size())), static_cast<int>(rng.uniform_index(g.size()))};
    if (g.at(c) != CellState::Occupied) return c;
  }
}

}  // namespace

TEST_CASE("planner cost equals the expanded-graph BFS oracle") {
  Rng rng(77);
  for (int t = 0; t < 30; ++t) {
    const auto g = random_grid(rng, 48, 0.25, 0.3);
    const Cell s = random_open(g, rng), e = random_open(g, rng);
    const int unknown_cost = 1 + t % 3;
    const long want = oracle::bfs_cost(g, s, e, unknown_cost);
    if (want < 0) {
      CHECK_THROWS_AS(plan_path(g, s, e, unknown_cost), NoPathError);
      continue;
    }
    const auto path = plan_path(g, s, e, unknown_cost);
    CHECK(path_cost(g, path, unknown_cost) == want);
    Cell prev = s;
    for (const Cell& c : path) {
      CHECK(std::abs(c.row - prev.row) + std::abs(c.col - prev.col) == 1);
      CHECK(g.at(c) != CellState::Occupied);
      prev = c;
    }
    if (!path.empty()) CHECK(path.back() == e);
  }
}

TEST_CASE("planner contracts") {
  ExplorationGrid g(8, CellState::Free);
  CHECK(plan_path(g, {1, 1}, {1, 1}).empty());
  g.set({3, 3}, CellState::Occupied);
  CHECK_THROWS_AS(plan_path(g, {0, 0}, {3, 3}), NoPathError);
  CHECK_THROWS_AS(plan_path(g, {3, 3}, {0, 0}), ContractError);
  CHECK_THROWS_AS(plan_path(g, {0, 0}, {9, 0}), ContractError);
  for (int c = 0; c < 8; ++c) g.set({4, c}, CellState::Occupied);
  CHECK_THROWS_AS(plan_path(g, {0, 0}, {7, 7}), NoPathError);
}

TEST_CASE("unknown cells cost more than free ones") {
  ExplorationGrid g(5, CellState::Free);
  for (int r = 0; r < 4; ++r) g.set({r, 2}, CellState::Unknown);
  // Straight across row 0 costs 4 + 1 = 5; detour through row 4 costs 4 + 4 = 8.
  const auto p = plan_path(g, {0, 0}, {0, 4}, 2);
  CHECK(path_cost(g, p, 2) == 5);
  CHECK(path_cost(g, plan_path(g, {0, 0}, {0, 4}, 9), 9) == 12);
}

TEST_CASE("random and frontier goals") {
  Rng rng(3);
  ExplorationGrid g(16, CellState::Unknown);
  for (int r = 4; r < 8; ++r) {
    for (int c = 4; c < 8; ++c) g.set({r, c}, CellState::Free);
  }
  g.set_agent({5, 5});
  for (int i = 0; i < 20; ++i) {
    const Cell c = random_goal_policy(g, rng);
    CHECK(g.at(c) == CellState::Free);
  }
  const Cell f = frontier_policy(g);
  CHECK(g.at(f) == CellState::Free);
  bool borders_unknown = false;
  for (auto [dr, dc] : {std::pair{-1, 0}, {1, 0}, {0, -1}, {0, 1}}) {
    borders_unknown = borders_unknown || g.at({f.row + dr, f.col + dc}) == CellState::Unknown;
  }
  CHECK(borders_unknown);
}

TEST_CASE("cla-greedy picks the reachable cell with the largest window mass") {
  Rng rng(8);
  for (int t = 0; t < 10; ++t) {
    auto g = random_grid(rng, 32, 0.15, 0.0);
    const Cell start = random_open(g, rng);
    g.set_agent(start);
    PolicyState st;
    st.size = 32;
    st.disagreement.assign(32 * 32, 0.0);
    for (int k = 0; k < 6; ++k) st.disagreement[rng.uniform_index(32 * 32)] = rng.uniform();
    st.explored.assign(32 * 32, 1.0);
    const auto reach = reachable_mask(g);
    double best = 0.0;
    for (int r = 0; r < 32; ++r) {
      for (int c = 0; c < 32; ++c) {
        if (reach[r * 32 + c] && g.at({r, c}) == CellState::Free) best = std::max(best, window_mass(st, {r, c}, 4));
      }
    }
    const Cell got = cla_greedy_policy(st, g, 4);
    CHECK(window_mass(st, got, 4) == doctest::Approx(best).epsilon(1e-9));
  }
}

TEST_CASE("policy names round-trip") {
  for (auto p : {PolicyKind::Random, PolicyKind::Frontier, PolicyKind::Cla}) {
    CHECK(policy_from_name(policy_name(p)) == p);
  }
  CHECK_THROWS(policy_from_name("ppo"));
}

TEST_CASE("episodes are deterministic and the log replays to the same map") {
  const Scene s = generate_scene(21, SceneSpec{});
  EpisodeConfig cfg;
  cfg.n_steps = 60;
  cfg.policy = PolicyKind::Cla;
  const HashingEmbedder emb;
  NoisyCaptioner c1(NoiseConfig{}), c2(NoiseConfig{});
  const auto a = run_episode(s, cfg, 5, c1, emb);
  const auto b = run_episode(s, cfg, 5, c2, emb);
  REQUIRE(a.log.records.size() == b.log.records.size());
  CHECK(a.log.records.size() <= 60);
  CHECK(a.map == b.map);
  CHECK(replay_map(a.log) == a.map);
  const auto caps = all_captions(a.log);
  std::set<std::uint64_t> ids;
  for (const auto& c : caps) CHECK(ids.insert(c.id).second);
  for (std::size_t i = 0; i < a.log.records.size(); ++i) {
    const auto& r = a.log.records[i];
    CHECK(r.step == static_cast<int>(i));
    CHECK(r.detections.size() == r.captions.size());
    CHECK(s.is_free(r.agent.position));
  }
}

TEST_CASE("zero-step episode is empty") {
  const Scene s = generate_scene(21, SceneSpec{});
  EpisodeConfig cfg;
  cfg.n_steps = 0;
  const HashingEmbedder emb;
  NoisyCaptioner cap(NoiseConfig{});
  const auto r = run_episode(s, cfg, 1, cap, emb);
  CHECK(r.log.records.empty());
  CHECK(r.map.empty());
}
