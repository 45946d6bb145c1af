#include <filesystem>
#include <iostream>

#include "CLI11.hpp"
#include "embcap/pipeline.hpp"

using namespace embcap;
namespace fs = std::filesystem;

namespace {

enum Exit { kOk = 0, kConfig = 2, kPhase = 3, kRemote = 4 };

struct Common {
  std::string config;
  RunConfig load() const { return config.empty() ? RunConfig{} : load_config(config); }
};

void add_config(CLI::App* cmd, Common& c) {
  cmd->add_option("--config", c.config, "YAML run config supplying defaults")->check(CLI::ExistingFile);
}

SceneSpec spec_from(const std::string& path, std::uint64_t* seed, const SceneSpec& dflt) {
  if (path.empty()) return dflt;
  return io::scene_spec_from_json(io::read_file(path), seed);
}

// Views per instance built straight from an episode log.
io::PseudoFile views_from_episode(const EpisodeLog& log) {
  const auto built = build_map(log);
  io::PseudoFile f;
  f.policy = log.policy;
  f.seed = log.seed;
  for (const auto& ic : instance_captions(built.instances, all_captions(log), nullptr)) {
    io::PseudoRecord r;
    r.caption.instance_id = ic.instance_id;
    r.caption.object_id = ic.object_id;
    r.pseudo_label = ic.pseudo_label;
    for (const auto& c : ic.captions) r.views.push_back({ic.instance_id, c.label, c.text, c.visible_fraction});
    f.records.push_back(std::move(r));
  }
  return f;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"embcap: consistent object captions from embodied exploration"};
  app.require_subcommand(1);
  Common common;

  // explore
  auto* explore = app.add_subcommand("explore", "Run one exploration episode and log detections and captions");
  std::string ex_scene, ex_policy = "frontier", ex_out = "episode.jsonl", ex_ann, ex_scene_out, ex_noise;
  int ex_steps = 300;
  std::uint64_t ex_seed = 0;
  add_config(explore, common);
  explore->add_option("--scene", ex_scene, "Scene spec or scene/1 JSON (default spec when omitted)")
      ->check(CLI::ExistingFile);
  explore->add_option("--policy", ex_policy, "random | frontier | cla")
      ->check(CLI::IsMember({"random", "frontier", "cla"}));
  explore->add_option("--steps", ex_steps, "Episode length")->check(CLI::NonNegativeNumber);
  explore->add_option("--seed", ex_seed, "Seed for scene generation and the episode");
  explore->add_option("--noise", ex_noise, "Caption noise preset: default | heterogeneous | zero");
  explore->add_option("--out", ex_out, "Episode log (episode/1 JSONL)");
  explore->add_option("--annotations", ex_ann, "Also write ground-truth annotations JSONL here");
  explore->add_option("--scene-out", ex_scene_out, "Also write the generated scene/1 JSON here");

  // build-map
  auto* bmap = app.add_subcommand("build-map", "Replay an episode into a voxel map and cluster instances");
  std::string bm_episode, bm_out = "map.json";
  bmap->add_option("--episode", bm_episode, "Episode log")->required()->check(CLI::ExistingFile);
  bmap->add_option("--out", bm_out, "Map snapshot (map/1 JSON)");

  // consensus
  auto* cons = app.add_subcommand("consensus", "Produce one pseudo-caption per object instance");
  std::string cs_episode, cs_map, cs_scene, cs_method = "ldcps-offline", cs_out = "pseudo.jsonl";
  double cs_alpha = 0.5;
  bool cs_class = false;
  add_config(cons, common);
  cons->add_option("--episode", cs_episode, "Episode log")->required()->check(CLI::ExistingFile);
  cons->add_option("--map", cs_map, "Map snapshot (rebuilt from the episode when omitted)")->check(CLI::ExistingFile);
  cons->add_option("--scene", cs_scene, "Scene spec used for the episode (for ECO proxies)")->check(CLI::ExistingFile);
  cons->add_option("--method", cs_method, "ldcps | ldcps-offline | eco | ic3")
      ->check(CLI::IsMember({"ldcps", "ldcps-offline", "eco", "ic3"}));
  cons->add_option("--eco-alpha", cs_alpha, "ECO alignment weight")->check(CLI::Range(0.0, 1.0));
  cons->add_flag("--object-class", cs_class, "Add the instance class line to the LD-CPS prompt");
  cons->add_option("--out", cs_out, "Pseudo-caption file (pseudo/1 JSONL)");

  // finetune
  auto* ft = app.add_subcommand("finetune", "Pre-train the toy captioner on raw captions, then fine-tune on pseudo-captions");
  std::string ft_data, ft_out = "model.json", ft_base_out, ft_log_out, ft_ablation_out;
  double ft_lambda = 0.1;
  int ft_epochs = 10, ft_patience = 3;
  std::uint64_t ft_seed = 0;
  bool ft_ablation = false;
  add_config(ft, common);
  ft->add_option("--data", ft_data, "Pseudo-caption file")->required()->check(CLI::ExistingFile);
  ft->add_option("--lambda", ft_lambda, "Triplet loss weight")->check(CLI::NonNegativeNumber);
  ft->add_option("--epochs", ft_epochs, "Maximum epochs")->check(CLI::NonNegativeNumber);
  ft->add_option("--patience", ft_patience, "Early-stopping patience")->check(CLI::PositiveNumber);
  ft->add_option("--seed", ft_seed, "Training seed");
  ft->add_option("--out", ft_out, "Fine-tuned model (toycap/1 JSON)");
  ft->add_option("--base-out", ft_base_out, "Also write the pre-trained base model");
  ft->add_option("--log-out", ft_log_out, "Also write the training history (training/1 JSON)");
  ft->add_flag("--ablation", ft_ablation, "Run the lambda ablation over {1, 0.5, 0.1}");
  ft->add_option("--ablation-out", ft_ablation_out, "Markdown table for the ablation");

  // evaluate
  auto* ev = app.add_subcommand("evaluate", "Score pseudo-captions against annotations");
  std::string ev_pred, ev_ann, ev_out = "report.json", ev_model;
  ev->add_option("--pred", ev_pred, "Pseudo-caption file")->required()->check(CLI::ExistingFile);
  ev->add_option("--ann", ev_ann, "Annotations JSONL")->required()->check(CLI::ExistingFile);
  ev->add_option("--model", ev_model, "Also score this model's captions")->check(CLI::ExistingFile);
  ev->add_option("--out", ev_out, "Report (report/1 JSON)");

  // consistency
  auto* con = app.add_subcommand("consistency", "Intra-instance caption consistency of a model");
  std::string co_model, co_episode, co_pseudo, co_base, co_out = "consistency.json", co_csv;
  con->add_option("--model", co_model, "Model to score")->required()->check(CLI::ExistingFile);
  con->add_option("--base", co_base, "Optional model to report as the pre-training score")->check(CLI::ExistingFile);
  auto* co_ep = con->add_option("--episode", co_episode, "Episode log supplying the views")->check(CLI::ExistingFile);
  auto* co_ps = con->add_option("--pseudo", co_pseudo, "Pseudo-caption file supplying the views")->check(CLI::ExistingFile);
  co_ep->excludes(co_ps);
  con->add_option("--out", co_out, "Quartile summary (consistency/1 JSON)");
  con->add_option("--csv", co_csv, "Per-instance scores CSV");

  // report
  auto* rep = app.add_subcommand("report", "Tabulate reports from run directories or manifests");
  std::vector<std::string> rp_inputs;
  std::string rp_out = "tables";
  rep->add_option("inputs", rp_inputs, "Run directories, manifest.json or report.json files")->required();
  rep->add_option("--out-dir", rp_out, "Directory for table1/table2 CSV and markdown");

  // run
  auto* run = app.add_subcommand("run", "Run every phase for each configured seed");
  std::string rn_config;
  bool rn_fresh = false;
  std::vector<std::uint64_t> rn_seeds;
  run->add_option("--config", rn_config, "YAML run config")->required()->check(CLI::ExistingFile);
  run->add_option("--seeds", rn_seeds, "Override the configured seed list");
  run->add_flag("--fresh", rn_fresh, "Ignore existing outputs and rerun every phase");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? kOk : kConfig;
  }

  try {
    if (*explore) {
      RunConfig cfg = common.load();
      std::uint64_t scene_seed = ex_seed;
      const SceneSpec spec = spec_from(ex_scene, &scene_seed, cfg.scene);
      if (!ex_noise.empty()) cfg.noise = noise_preset(ex_noise);
      const Scene scene = generate_scene(scene_seed, spec);
      EpisodeConfig ecfg = cfg.episode;
      ecfg.policy = policy_from_name(ex_policy);
      ecfg.n_steps = ex_steps;
      auto captioner = make_captioner(cfg);
      auto embedder = make_embedder(cfg);
      const auto res = run_episode(scene, ecfg, ex_seed, *captioner, *embedder);
      io::write_file(ex_out, io::episode_to_jsonl(res.log));
      if (!ex_ann.empty()) {
        std::vector<std::string> warnings;
        io::write_file(ex_ann, export_annotations(scene, &warnings));
        for (const auto& w : warnings) std::cerr << "warning: " << w << "\n";
      }
      if (!ex_scene_out.empty()) io::write_file(ex_scene_out, io::scene_to_json(scene, spec));
      std::cout << ex_out << ": " << res.log.records.size() << " steps, " << all_captions(res.log).size()
                << " captions\n";
    } else if (*bmap) {
      const auto built = build_map(io::episode_from_jsonl(io::read_file(bm_episode)));
      io::write_file(bm_out, io::map_to_json(built.map, built.instances));
      std::cout << bm_out << ": " << built.map.size() << " voxels, " << built.instances.size() << " instances\n";
    } else if (*cons) {
      RunConfig cfg = common.load();
      const auto log = io::episode_from_jsonl(io::read_file(cs_episode));
      MapBuild built;
      if (cs_map.empty()) {
        built = build_map(log);
      } else {
        auto mf = io::map_from_json(io::read_file(cs_map));
        built = {std::move(mf.map), std::move(mf.instances)};
      }
      const Scene scene = generate_scene(log.scene_seed, spec_from(cs_scene, nullptr, cfg.scene));
      cfg.consensus.method = method_from_name(cs_method);
      cfg.consensus.eco_alpha = cs_alpha;
      cfg.consensus.include_object_class = cfg.consensus.include_object_class || cs_class;
      auto llm = cs_method == "ldcps" || cs_method == "ic3" ? make_llm(cfg) : nullptr;
      if ((cs_method == "ldcps" || cs_method == "ic3") && !llm) {
        std::cerr << "warning: no LLM endpoint configured (" << kEnvLlmUrl << "); using the offline fallback\n";
      }
      auto embedder = make_embedder(cfg);
      const auto pf = run_consensus(log, built, &scene, cfg.consensus, llm.get(), *embedder);
      io::write_file(cs_out, io::pseudo_to_jsonl(pf));
      int fallbacks = 0;
      for (const auto& r : pf.records) fallbacks += r.caption.fallback;
      std::cout << cs_out << ": " << pf.records.size() << " pseudo-captions, " << fallbacks << " fallbacks, "
                << pf.skipped.size() << " skipped\n";
    } else if (*ft) {
      RunConfig cfg = common.load();
      LossConfig loss = cfg.loss;
      loss.lambda_tr = ft_lambda;
      loss.epochs = ft_epochs;
      loss.patience = ft_patience;
      const auto pf = io::pseudo_from_jsonl(io::read_file(ft_data));
      auto embedder = make_embedder(cfg);
      const auto out = run_training(pf, loss, ft_ablation, *embedder, ft_seed);
      io::write_file(ft_out, io::model_to_json(out.tuned.model));
      if (!ft_base_out.empty()) io::write_file(ft_base_out, io::model_to_json(out.base));
      if (!ft_log_out.empty()) {
        io::TrainingLog tl;
        tl.finetune = {loss.lambda_tr, out.tuned.history, out.tuned.best_epoch, out.tuned.stopped_early};
        tl.ablation = out.ablation;
        io::write_file(ft_log_out, io::training_to_json(tl));
      }
      if (ft_ablation) {
        const auto md = ablation_markdown(out.ablation);
        if (ft_ablation_out.empty()) std::cout << md;
        else io::write_file(ft_ablation_out, md);
      }
      std::cout << ft_out << ": best epoch " << out.tuned.best_epoch << " of " << out.tuned.history.size() - 1
                << (out.tuned.stopped_early ? " (stopped early)" : "") << "\n";
    } else if (*ev) {
      const auto pf = io::pseudo_from_jsonl(io::read_file(ev_pred));
      const auto anns = annotation_map(io::parse_annotations(io::read_file(ev_ann)));
      HashingEmbedder embedder;
      io::RunReport r;
      r.seed = pf.seed;
      r.policy = pf.policy;
      r.method = pf.method;
      auto m = evaluate_run(predictions_by_object(pf), anns, embedder);
      m.method = r.method;
      m.policy = r.policy;
      m.captioner = r.captioner;
      r.metrics = m;
      if (!ev_model.empty()) {
        const auto model = io::model_from_json(io::read_file(ev_model));
        r.captioner_after = evaluate_run(model_predictions(model, pf), anns, embedder);
      }
      io::write_file(ev_out, io::report_to_json(r));
      std::printf("%s: B4 %.2f  METEOR %.2f  R_L %.2f  CS %.2f\n", ev_out.c_str(), m.mean_bleu4, m.mean_meteor,
                  m.mean_rouge_l, m.mean_cs);
    } else if (*con) {
      if (co_episode.empty() && co_pseudo.empty()) throw ConfigError("consistency needs --episode or --pseudo");
      const auto pf = co_episode.empty() ? io::pseudo_from_jsonl(io::read_file(co_pseudo))
                                         : views_from_episode(io::episode_from_jsonl(io::read_file(co_episode)));
      const auto views = pseudo_views(pf);
      HashingEmbedder embedder;
      io::ConsistencyPair cp;
      cp.post = consistency_score(io::model_from_json(io::read_file(co_model)), views, embedder);
      if (!co_base.empty()) cp.pre = consistency_score(io::model_from_json(io::read_file(co_base)), views, embedder);
      io::write_file(co_out, io::consistency_to_json(cp));
      if (!co_csv.empty()) io::write_file(co_csv, io::consistency_csv(cp.post));
      if (cp.post.summary) {
        const auto& q = *cp.post.summary;
        std::printf("%s: %zu instances, q1 %.4f median %.4f q3 %.4f\n", co_out.c_str(), cp.post.scores.size(), q.q1,
                    q.median, q.q3);
      } else {
        std::printf("%s: no instance has two views\n", co_out.c_str());
      }
    } else if (*rep) {
      std::vector<fs::path> paths(rp_inputs.begin(), rp_inputs.end());
      const auto tables = build_report(load_reports(paths));
      const fs::path dir = rp_out;
      io::write_file(dir / "table1.csv", tables.table1_csv);
      io::write_file(dir / "table1.md", tables.table1_md);
      io::write_file(dir / "table2.csv", tables.table2_csv);
      io::write_file(dir / "table2.md", tables.table2_md);
      std::cout << tables.table1_md << "\n" << tables.table2_md;
    } else if (*run) {
      RunConfig cfg = load_config(rn_config);
      if (!rn_seeds.empty()) cfg.seeds = rn_seeds;
      RunOptions opts;
      opts.resume = !rn_fresh;
      opts.log = &std::cerr;
      for (const auto& m : run_pipeline(cfg, opts)) {
        const fs::path dir = cfg.output_dir / ("seed-" + std::to_string(m.seed));
        const auto bad = verify_manifest(m, dir);
        std::cout << (dir / "manifest.json").string() << ": " << m.entries.size() << " files, "
                  << (bad.empty() ? "all hashes verified" : std::to_string(bad.size()) + " hash mismatches") << "\n";
        for (const auto& p : m.phases) {
          if (p.status == "skipped") std::cout << "  " << p.phase << " skipped: " << p.reason << "\n";
        }
        if (!bad.empty()) return kPhase;
      }
    }
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kConfig;
  } catch (const TransportError& e) {
    std::cerr << "remote service error: " << e.what() << "\n";
    return kRemote;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kPhase;
  }
  return kOk;
}
