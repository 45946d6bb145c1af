#include <set>
#include "doctest.h"
#include "embcap/voxel_map.hpp"
#include "oracles.hpp"

using namespace embcap;

namespace {

std::vector<double> onehot(int label) {
  std::vector<double> v(kNumClasses, 0.0);
  v[label] = 1.0;
  return v;
}

// Random labeled n^3 grid; label 0 is empty space.
std::vector<int> random_labels(Rng& rng, int n, double fill) {
  std::vector<int> labels(static_cast<std::size_t>(n) * n * n, 0);
  for (auto& l : labels) {
    if (rng.bernoulli(fill)) l = 1 + static_cast<int>(rng.uniform_index(3));
  }
  return labels;
}

SemanticVoxelMap map_of(const std::vector<int>& labels, int n) {
  SemanticVoxelMap m;
  for (int z = 0; z < n; ++z) {
    for (int y = 0; y < n; ++y) {
      for (int x = 0; x < n; ++x) {
        const int l = labels[(static_cast<std::size_t>(z) * n + y) * n + x];
        if (l) m.add_hit({x, y, z}, onehot(l - 1));
      }
    }
  }
  return m;
}

std::set<std::vector<std::array<int, 3>>> partition(const std::vector<ObjectInstance>& insts) {
  std::set<std::vector<std::array<int, 3>>> out;
  for (const auto& i : insts) {
    std::vector<std::array<int, 3>> c;
    for (const auto& v : i.voxels) c.push_back({v.x, v.y, v.z});
    std::sort(c.begin(), c.end());
    out.insert(c);
  }
  return out;
}

}  // namespace

TEST_CASE("voxel label is the argmax of summed logits, lowest class on ties") {
  SemanticVoxelMap m;
  m.add_hit({0, 0, 0}, onehot(2));
  m.add_hit({0, 0, 0}, onehot(1));
  CHECK(m.find({0, 0, 0})->label() == 1);
  m.add_hit({0, 0, 0}, onehot(2));
  CHECK(m.find({0, 0, 0})->label() == 2);
  CHECK(m.find({0, 0, 0})->hit_count == 3);
  CHECK_THROWS_AS(m.add_hit({1, 0, 0}, std::vector<double>{1.0}), ContractError);
}

TEST_CASE("clustering matches a flood-fill oracle") {
  Rng rng(123);
  for (int t = 0; t < 20; ++t) {
    const int n = 10;
    const auto labels = random_labels(rng, n, 0.25 + 0.02 * t);
    const auto insts = cluster_objects(map_of(labels, n));
    CHECK(partition(insts) == oracle::flood_fill(labels, n));
    for (const auto& i : insts) {
      CHECK(i.pseudo_label == labels[(static_cast<std::size_t>(i.voxels[0].z) * n + i.voxels[0].y) * n +
                                     i.voxels[0].x] - 1);
    }
  }
}

TEST_CASE("diagonal neighbours join, different labels split") {
  SemanticVoxelMap m;
  m.add_hit({0, 0, 0}, onehot(0));
  m.add_hit({1, 1, 1}, onehot(0));
  m.add_hit({2, 2, 2}, onehot(1));
  const auto insts = cluster_objects(m);
  REQUIRE(insts.size() == 2);
  CHECK(insts[0].voxels.size() == 2);
  CHECK(insts[1].pseudo_label == 1);
}

TEST_CASE("instances collect the caption ids of their voxels") {
  SemanticVoxelMap m;
  m.add_hit({0, 0, 0}, onehot(0)).caption_refs = {4, 2};
  m.add_hit({0, 1, 0}, onehot(0)).caption_refs = {2, 9};
  const auto insts = cluster_objects(m);
  REQUIRE(insts.size() == 1);
  CHECK(insts[0].captions == std::vector<std::uint64_t>{2, 4, 9});
}

TEST_CASE("object disagreement") {
  const HashingEmbedder e;
  const auto a = e.embed("a red couch"), b = e.embed("a blue bed"), c = e.embed("a green toilet");
  CHECK(object_disagreement(std::vector<Embedding>{a}) == 0.0);
  CHECK(object_disagreement(std::vector<Embedding>{a, a, a}) == doctest::Approx(0.0).epsilon(1e-12));

  // Pairwise mean of (1 - cos) / 2.
  const std::vector<Embedding> three{a, b, c};
  const double expect =
      ((1 - cosine(a, b)) / 2 + (1 - cosine(a, c)) / 2 + (1 - cosine(b, c)) / 2) / 3.0;
  CHECK(object_disagreement(three) == doctest::Approx(expect).epsilon(1e-12));
  CHECK(object_disagreement(three) > object_disagreement(std::vector<Embedding>{a, a, b}));

  // Duplicate caption references are scored once.
  std::map<std::uint64_t, Embedding> table{{1, a}, {2, b}};
  ObjectInstance inst;
  inst.captions = {1, 2};
  const auto lookup = [&](std::uint64_t id) -> const Embedding& { return table.at(id); };
  const double once = object_disagreement(inst, lookup);
  inst.captions = {1, 2, 2, 1};
  CHECK(object_disagreement(inst, lookup) == once);
}

TEST_CASE("disagreement map projects instance columns onto the policy grid") {
  const Scene s = generate_scene(1, SceneSpec{});
  const GridFrame frame = GridFrame::for_scene(s);
  SemanticVoxelMap m;
  ObjectInstance inst;
  inst.voxels = {{10, 12, 0}, {10, 12, 3}, {11, 12, 0}};
  AgentState agent;
  agent.position = {1.0, 1.0, 0.0};
  const ExplorationGrid explored(frame.size);
  const std::vector<ObjectInstance> insts{inst};
  const auto st = disagreement_map(m, insts, std::vector<double>{0.4}, agent, explored, frame);
  REQUIRE(st.disagreement.size() == static_cast<std::size_t>(frame.size * frame.size));
  const Cell c = frame.cell_of(10.5 * 0.25, 12.5 * 0.25);
  CHECK(st.disagreement_at(c) == 0.4);
  double total = 0.0;
  for (double v : st.disagreement) total += v > 0.0;
  CHECK(total > 0.0);
  const Cell a = frame.cell_of(1.0, 1.0);
  CHECK(st.explored[static_cast<std::size_t>(a.row) * frame.size + a.col] == kAgentMarker);
}
