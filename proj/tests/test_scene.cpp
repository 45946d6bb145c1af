#include <set>

#include "doctest.h"
#include "embcap/lexicon.hpp"
#include "embcap/perception.hpp"
#include "embcap/scene.hpp"

using namespace embcap;

TEST_CASE("scene generation is seeded and objects do not overlap") {
  const SceneSpec spec;
  const Scene a = generate_scene(42, spec), b = generate_scene(42, spec), c = generate_scene(43, spec);
  REQUIRE(a.objects().size() == static_cast<std::size_t>(spec.n_objects));
  CHECK(b.objects().size() == a.objects().size());
  bool differs = false;
  for (std::size_t i = 0; i < a.objects().size(); ++i) {
    CHECK(a.objects()[i].voxels == b.objects()[i].voxels);
    CHECK(a.objects()[i].gt_caption == b.objects()[i].gt_caption);
    if (i < c.objects().size() && c.objects()[i].voxels != a.objects()[i].voxels) differs = true;
  }
  CHECK(differs);

  std::set<VoxelKey> seen;
  for (const auto& o : a.objects()) {
    CHECK(o.id == static_cast<int>(&o - a.objects().data()));
    for (const auto& v : o.voxels) {
      CHECK(seen.insert(v).second);
      CHECK(a.owner(v) == o.id);
    }
  }
}

TEST_CASE("ground-truth caption renders the attribute tokens") {
  const Scene s = generate_scene(7, SceneSpec{});
  for (const auto& o : s.objects()) {
    REQUIRE(o.attribute_tokens.size() == 3);
    const auto expect = lexicon::render_caption(o.attribute_tokens[0], o.attribute_tokens[1], o.category,
                                                lexicon::context_phrase_for(o.attribute_tokens[2]));
    CHECK(o.gt_caption == expect);
    CHECK(o.difficulty >= 0.0);
    CHECK(o.difficulty <= 1.0);
  }
}

TEST_CASE("forward motion stops before a wall") {
  Scene s({40, 40, 8}, 0.25, 0);
  for (int y = 0; y < 40; ++y) {
    for (int z = 0; z < 8; ++z) s.add_structure({9, y, z});  // wall face at x = 2.25 m
  }
  AgentState a;
  a.position = {1.95, 5.0, 0.0};
  a.yaw = 0.0;
  const AgentState b = step_agent(s, a, Forward{1.0});
  CHECK(b.position.x > a.position.x);
  CHECK(b.position.x - a.position.x < 0.3);
  CHECK(s.is_free(b.position));
  CHECK(b.step_index == 1);

  const AgentState r = step_agent(s, b, Rotate{-std::numbers::pi / 2});
  CHECK(r.position == b.position);
  CHECK(r.yaw == doctest::Approx(3 * std::numbers::pi / 2));
}

TEST_CASE("observation depth is finite only on hits") {
  const Scene s = generate_scene(3, SceneSpec{});
  Rng rng(1);
  const CameraConfig cam;
  const AgentState a = random_free_pose(s, cam, rng);
  CHECK(s.is_free(a.position));
  const Observation obs = observe(s, a, cam);
  REQUIRE(obs.depth.size() == static_cast<std::size_t>(cam.width * cam.height));
  for (const auto& f : obs.visible_fragments) {
    CHECK(f.visible_fraction > 0.0);
    CHECK(f.visible_fraction <= 1.0);
    for (int p : f.pixels) {
      CHECK(std::isfinite(obs.depth[p]));
      CHECK(obs.depth[p] <= cam.max_range);
    }
  }
}
