#include <filesystem>
#include <set>
#include <fstream>

#include "doctest.h"
#include "embcap/pipeline.hpp"

using namespace embcap;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / "embcap_pipeline_test" / name;
  fs::remove_all(p);
  return p;
}

RunConfig small_config() {
  RunConfig cfg;
  cfg.steps = 120;
  cfg.episode.n_steps = 120;
  cfg.ablation = false;
  return cfg;
}

std::map<std::string, std::string> hashes(const io::Manifest& m) {
  std::map<std::string, std::string> out;
  for (const auto& e : m.entries) out[e.path] = e.sha256;
  return out;
}

const io::PhaseStatus& phase(const io::Manifest& m, const std::string& name) {
  for (const auto& p : m.phases) {
    if (p.phase == name) return p;
  }
  FAIL("phase missing: " << name);
  throw 0;
}

}  // namespace

TEST_CASE("environment interpolation") {
  ::setenv("EMBCAP_T_A", "alpha", 1);
  ::unsetenv("EMBCAP_T_B");
  CHECK(interpolate_env("x ${EMBCAP_T_A} y") == "x alpha y");
  CHECK(interpolate_env("${EMBCAP_T_B:-dflt}") == "dflt");
  CHECK(interpolate_env("no vars") == "no vars");
  CHECK_THROWS_AS(interpolate_env("${EMBCAP_T_B}"), ConfigError);
  CHECK_THROWS_AS(interpolate_env("${EMBCAP_T_A"), ConfigError);
}

TEST_CASE("config parsing and validation") {
  const auto cfg = parse_config(R"(
seeds: [3, 4]
output_dir: runs/x
exploration: {policy: cla, steps: 50, cla_radius: 6}
noise: {preset: heterogeneous, p_hallucinate: 0.2}
consensus: {method: eco, eco_alpha: 0.3}
llm: {url: "http://llm:1", token: "${EMBCAP_T_B:-tok}", model: m2}
training: {lambda_tr: 0.5, epochs: 4}
)",
                                "/base");
  CHECK(cfg.seeds == std::vector<std::uint64_t>{3, 4});
  CHECK(cfg.output_dir == fs::path("/base/runs/x"));
  CHECK(cfg.episode.policy == PolicyKind::Cla);
  CHECK(cfg.episode.n_steps == 50);
  CHECK(cfg.episode.cla_radius == 6);
  CHECK(cfg.noise.difficulty_boost == NoiseConfig::heterogeneous().difficulty_boost);
  CHECK(cfg.noise.p_hallucinate == 0.2);
  CHECK(cfg.consensus.method == ConsensusMethod::Eco);
  CHECK(cfg.llm.remote.token == "tok");
  CHECK(cfg.consensus.request_template.model == "m2");
  CHECK(cfg.loss.lambda_tr == 0.5);
  CHECK(cfg.loss.epochs == 4);
  CHECK(cfg.loss.margin == 2.0);

  const auto d = parse_config("");
  CHECK(d.steps == 300);
  CHECK(d.loss.lambda_tr == 0.1);
  CHECK(d.loss.learning_rate == 5e-4);
  CHECK(d.loss.weight_decay == 1e-3);
  CHECK(d.loss.patience == 3);
  CHECK(d.episode.filter.min_confidence == 0.7);
  CHECK(d.episode.filter.nms_iou == 0.8);
  CHECK(d.episode.grid_size == 128);

  // An empty value, e.g. from ${VAR:-}, keeps the default.
  const auto e = parse_config("llm: {url: ${EMBCAP_T_UNSET_URL:-}}\nexploration: {steps: }");
  CHECK(e.llm.remote.url.empty());
  CHECK(e.steps == 300);

  CHECK_THROWS_AS(parse_config("seeds: []"), ConfigError);
  CHECK_THROWS_AS(parse_config("bogus: 1"), ConfigError);
  CHECK_THROWS_AS(parse_config("training: {lamda_tr: 1}"), ConfigError);
  CHECK_THROWS_AS(parse_config("exploration: {policy: ppo}"), ConfigError);
  CHECK_THROWS_AS(parse_config("consensus: {method: best}"), ConfigError);
  CHECK_THROWS_AS(parse_config("scene: {spec: /does/not/exist.json}"), ConfigError);
  CHECK_THROWS_AS(parse_config("training: {margin: 0}"), ConfigError);
  CHECK_THROWS_AS(parse_config("exploration: {steps: many}"), ConfigError);
  CHECK_THROWS_AS(parse_config("a: [1"), ConfigError);
  CHECK_THROWS_AS(parse_config("captioner: {kind: remote}"), ConfigError);
  CHECK_THROWS_AS(load_config("/does/not/exist.yaml"), ConfigError);
}

TEST_CASE("config hash ignores secrets and output paths") {
  RunConfig a, b;
  b.llm.remote.token = "secret";
  b.output_dir = "elsewhere";
  CHECK(canonical_config(a) == canonical_config(b));
  CHECK(canonical_config(a).find("secret") == std::string::npos);
  b.loss.lambda_tr = 1.0;
  CHECK(canonical_config(a) != canonical_config(b));
}

TEST_CASE("annotation export") {
  SceneSpec one;
  one.n_objects = 1;
  std::vector<std::string> warnings;
  const auto t1 = export_annotations(generate_scene(1, one), &warnings);
  CHECK(std::count(t1.begin(), t1.end(), '\n') == 1);
  CHECK(warnings.empty());

  const Scene empty({8, 8, 4}, 0.25, 0);
  CHECK(export_annotations(empty, &warnings).empty());
  CHECK(warnings.size() == 1);

  const Scene s = generate_scene(2, SceneSpec{});
  std::set<int> want, got;
  for (const auto& o : s.objects()) want.insert(o.id);
  for (const auto& a : io::parse_annotations(export_annotations(s))) CHECK(got.insert(a.object_id).second);
  CHECK(got == want);
}

TEST_CASE("zero-step run skips downstream phases with reasons") {
  RunConfig cfg = small_config();
  cfg.steps = cfg.episode.n_steps = 0;
  const auto dir = scratch("zero");
  const auto m = run_seed(cfg, 0, dir);
  CHECK(phase(m, "explore").status == "done");
  for (const char* p : {"build-map", "consensus", "finetune", "consistency", "evaluate"}) {
    CHECK(phase(m, p).status == "skipped");
    CHECK_FALSE(phase(m, p).reason.empty());
  }
  CHECK(verify_manifest(m, dir).empty());
  CHECK(io::episode_from_jsonl(io::read_file(dir / "episode.jsonl")).records.empty());
}

TEST_CASE("full run: manifest covers every file, reruns are identical, resume skips work") {
  const RunConfig cfg = small_config();
  const auto d1 = scratch("a"), d2 = scratch("b");
  const auto m1 = run_seed(cfg, 5, d1);
  CHECK(m1.phases.size() == 6);
  for (const auto& p : m1.phases) CHECK(p.status == "done");
  CHECK(verify_manifest(m1, d1).empty());
  CHECK_FALSE(m1.failure);
  CHECK(m1.deviations.size() >= 3);

  std::set<std::string> listed;
  for (const auto& e : m1.entries) CHECK(listed.insert(e.path).second);
  for (const auto& f : fs::directory_iterator(d1)) {
    const auto name = f.path().filename().string();
    if (name != "manifest.json") CHECK_MESSAGE(listed.count(name), name);
  }

  const auto m2 = run_seed(cfg, 5, d2);
  CHECK(hashes(m1) == hashes(m2));

  const auto resumed = run_seed(cfg, 5, d1);
  CHECK(resumed.timestamps == m1.timestamps);
  CHECK(hashes(resumed) == hashes(m1));

  // A tampered intermediate file forces that phase and everything after it to rerun.
  { std::ofstream(d1 / "pseudo.jsonl", std::ios::app) << "\n"; }
  RunOptions opts;
  const auto repaired = run_seed(cfg, 5, d1, opts);
  CHECK(hashes(repaired) == hashes(m1));
  CHECK(verify_manifest(repaired, d1).empty());

  // A changed config is not resumed.
  RunConfig other = cfg;
  other.consensus.method = ConsensusMethod::Eco;
  const auto m3 = run_seed(other, 5, d1);
  CHECK(m3.config_hash != m1.config_hash);
  CHECK(io::pseudo_from_jsonl(io::read_file(d1 / "pseudo.jsonl")).method == "eco");
}

TEST_CASE("a failing phase leaves a partial manifest with a failure record") {
  RunConfig cfg = small_config();
  cfg.captioner.kind = "remote";
  cfg.captioner.remote.url = "http://127.0.0.1:9";
  cfg.captioner.remote.retries = 0;
  cfg.captioner.remote.timeout_s = 1.0;
  const auto dir = scratch("fail");
  CHECK_THROWS_AS(run_seed(cfg, 1, dir), TransportError);
  const auto m = io::manifest_from_json(io::read_file(dir / "manifest.json"));
  REQUIRE(m.failure);
  CHECK(m.failure->phase == "explore");
  CHECK(m.failure->status == "failed");
  CHECK_FALSE(m.failure->reason.empty());
}

TEST_CASE("report tables") {
  const RunConfig cfg = small_config();
  const auto dir = scratch("report");
  run_seed(cfg, 2, dir);
  const auto reports = load_reports({dir});
  REQUIRE(reports.size() == 1);
  const auto t = build_report(reports);
  CHECK(t.table1_rows == 1);
  CHECK(t.table2_rows == 2);

  // Table values are the report values, not recomputed.
  const auto& m = *reports[0].metrics;
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", m.mean_bleu4);
  CHECK(t.table1_csv.find(std::string(",") + buf + ",") != std::string::npos);
  std::snprintf(buf, sizeof buf, "%.17g", m.mean_cs);
  CHECK(t.table1_csv.find(std::string(",") + buf + "\n") != std::string::npos);

  // Three policies by two methods gives six rows, best per policy in bold.
  std::vector<io::RunReport> grid;
  for (const char* pol : {"random", "frontier", "cla"}) {
    for (const char* meth : {"ldcps-medoid", "eco"}) {
      io::RunReport r = reports[0];
      r.policy = pol;
      r.method = meth;
      r.metrics->mean_cs = std::string(meth) == "eco" ? 10.0 : 20.0;
      grid.push_back(r);
    }
  }
  const auto t6 = build_report(grid);
  CHECK(t6.table1_rows == 6);
  CHECK(std::count(t6.table1_csv.begin(), t6.table1_csv.end(), '\n') == 7);
  CHECK(t6.table1_md.find("**20.00**") != std::string::npos);
  CHECK(t6.table1_md.find("| **10.00** |\n") == std::string::npos);
  CHECK(t6.table1_md.find("| 10.00 |\n") != std::string::npos);

  CHECK_THROWS_AS(build_report({}), ReportError);
  io::write_file(dir / "old" / "report.json", "{\"schema\": \"report/0\"}");
  CHECK_THROWS_AS(load_reports({dir / "old" / "report.json"}), ReportError);

  // A parent directory collects the runs below it and skips those without a report.
  const auto parent = scratch("report-parent");
  run_seed(cfg, 2, parent / "seed-2");
  RunConfig zero = cfg;
  zero.steps = zero.episode.n_steps = 0;
  run_seed(zero, 3, parent / "seed-3");
  CHECK(load_reports({parent}).size() == 1);
  CHECK_THROWS_AS(load_reports({parent / "seed-3"}), ReportError);
  CHECK_THROWS_AS(load_reports({scratch("report-empty")}), ReportError);
}
