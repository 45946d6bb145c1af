#include <filesystem>
#include <set>

#include "doctest.h"
#include "embcap/pipeline.hpp"

using namespace embcap;
namespace fs = std::filesystem;

namespace {

struct Episode {
  Scene scene = generate_scene(31, SceneSpec{});
  EpisodeLog log;
  Episode() {
    EpisodeConfig cfg;
    cfg.n_steps = 40;
    NoisyCaptioner cap(NoiseConfig{});
    const HashingEmbedder e;
    log = run_episode(scene, cfg, 2, cap, e).log;
  }
};

const Episode& episode() {
  static const Episode ep;
  return ep;
}

}  // namespace

TEST_CASE("sha256 test vector") {
  CHECK(io::sha256_hex("abc") == "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
  CHECK(io::sha256_hex("") == "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
}

TEST_CASE("write_file creates directories and read_file reports missing files") {
  const fs::path dir = fs::temp_directory_path() / "embcap_io_test" / "nested";
  fs::remove_all(dir.parent_path());
  io::write_file(dir / "x.txt", "hello");
  CHECK(io::read_file(dir / "x.txt") == "hello");
  CHECK(io::sha256_file(dir / "x.txt") == io::sha256_hex("hello"));
  CHECK_THROWS_AS(io::read_file(dir / "missing"), ParseError);
  fs::remove_all(dir.parent_path());
}

TEST_CASE("scene spec round-trips, bare or inside a scene document") {
  SceneSpec spec;
  spec.n_objects = 5;
  spec.bounds = {24, 28, 10};
  const Scene s = generate_scene(8, spec);
  std::uint64_t seed = 0;
  const auto back = io::scene_spec_from_json(io::scene_to_json(s, spec), &seed);
  CHECK(seed == 8);
  CHECK(back.n_objects == 5);
  CHECK(back.bounds == spec.bounds);
  CHECK(io::scene_spec_to_json(io::scene_spec_from_json(io::scene_spec_to_json(spec))) == io::scene_spec_to_json(spec));
  CHECK_THROWS_AS(io::scene_spec_from_json("{\"schema\": \"scene/9\"}"), ParseError);
}

TEST_CASE("annotations list every object once") {
  const auto& s = episode().scene;
  const auto anns = io::parse_annotations(io::annotations_jsonl(s));
  REQUIRE(anns.size() == s.objects().size());
  std::set<int> ids;
  for (const auto& a : anns) {
    ids.insert(a.object_id);
    CHECK(a.gt_caption == s.objects()[a.object_id].gt_caption);
  }
  CHECK(ids.size() == anns.size());
}

TEST_CASE("episode log round-trips") {
  const auto& log = episode().log;
  const auto text = io::episode_to_jsonl(log);
  const auto back = io::episode_from_jsonl(text);
  CHECK(io::episode_to_jsonl(back) == text);
  CHECK(replay_map(back) == replay_map(log));
  // Dropping the last line is detected.
  const auto cut = text.substr(0, text.rfind('\n', text.size() - 2) + 1);
  CHECK_THROWS_AS(io::episode_from_jsonl(cut), ParseError);
  CHECK_THROWS_AS(io::episode_from_jsonl("{\"schema\":\"episode/2\"}\n"), ParseError);
}

TEST_CASE("map, pseudo, model and report files round-trip") {
  const auto built = build_map(episode().log);
  const auto mtext = io::map_to_json(built.map, built.instances);
  const auto mf = io::map_from_json(mtext);
  CHECK(mf.map == built.map);
  CHECK(io::map_to_json(mf.map, mf.instances) == mtext);

  const HashingEmbedder e;
  const auto pf = run_consensus(episode().log, built, &episode().scene, ConsensusConfig{}, nullptr, e);
  const auto ptext = io::pseudo_to_jsonl(pf);
  CHECK(io::pseudo_to_jsonl(io::pseudo_from_jsonl(ptext)) == ptext);

  Rng rng(1);
  const ToyCaptioner m(Vocabulary{}, 8, 6, rng);
  CHECK(io::model_from_json(io::model_to_json(m)) == m);
  CHECK_THROWS_AS(io::model_from_json("{\"schema\":\"toycap/1\",\"params\":[1]}"), ParseError);

  io::RunReport r;
  r.seed = 3;
  r.policy = "cla";
  r.method = "eco";
  r.metrics = evaluate_run({{"0", "a red couch"}, {"1", "a bed"}}, {{"0", "a red couch"}, {"1", "a blue bed"}}, e);
  r.notes = {"note"};
  const auto rtext = io::report_to_json(r);
  CHECK(io::report_to_json(io::report_from_json(rtext)) == rtext);
  CHECK_THROWS_AS(io::report_from_json("{\"schema\":\"report/0\"}"), ParseError);
}

TEST_CASE("manifest round-trips and timestamps do not change the hash-relevant content") {
  io::Manifest m;
  m.config_hash = "abc";
  m.seed = 4;
  m.entries = {{"explore", "episode.jsonl", "00", "episode/1"}};
  m.phases = {{"explore", "done", ""}};
  m.deviations = {"METEOR-lite"};
  const auto text = io::manifest_to_json(m);
  CHECK(io::manifest_to_json(io::manifest_from_json(text)) == text);
}
