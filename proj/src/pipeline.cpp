#include "embcap/pipeline.hpp"

#include <yaml-cpp/yaml.h>

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <ctime>
#include <ostream>
#include <set>
#include <sstream>

#include "json.hpp"

namespace embcap {

namespace fs = std::filesystem;
using nlohmann::json;

// ---------------------------------------------------------------------------
// Config
// ---------------------------------------------------------------------------

std::string interpolate_env(std::string_view text) {
  std::string out;
  std::size_t pos = 0;
  while (pos < text.size()) {
    const auto open = text.find("${", pos);
    if (open == std::string_view::npos) {
      out.append(text.substr(pos));
      break;
    }
    out.append(text.substr(pos, open - pos));
    const auto close = text.find('}', open + 2);
    if (close == std::string_view::npos) throw ConfigError("unterminated ${ in config");
    const std::string inner(text.substr(open + 2, close - open - 2));
    const auto dflt = inner.find(":-");
    const std::string name = inner.substr(0, dflt);
    if (name.empty()) throw ConfigError("empty variable name in config");
    const char* val = std::getenv(name.c_str());
    if (val && *val) {
      out += val;
    } else if (dflt != std::string::npos) {
      out += inner.substr(dflt + 2);
    } else {
      throw ConfigError("environment variable " + name + " is not set");
    }
    pos = close + 1;
  }
  return out;
}

NoiseConfig noise_preset(std::string_view name) {
  if (name == "default") return NoiseConfig{};
  if (name == "heterogeneous") return NoiseConfig::heterogeneous();
  if (name == "zero") return NoiseConfig::zero();
  throw ConfigError("unknown noise preset: " + std::string(name));
}

namespace {

void check_keys(const YAML::Node& node, std::string_view section, std::initializer_list<std::string_view> allowed) {
  if (!node) return;
  if (!node.IsMap()) throw ConfigError(std::string(section) + " must be a mapping");
  for (const auto& kv : node) {
    const auto key = kv.first.as<std::string>();
    if (std::find(allowed.begin(), allowed.end(), key) == allowed.end()) {
      throw ConfigError("unknown key '" + key + "' in " + std::string(section));
    }
  }
}

template <typename T>
void read(const YAML::Node& node, const char* key, T& out) {
  if (node && node[key] && !node[key].IsNull()) out = node[key].as<T>();
}

void read_remote(const YAML::Node& node, RemoteConfig& r) {
  read(node, "url", r.url);
  read(node, "token", r.token);
  read(node, "timeout_s", r.timeout_s);
  read(node, "retries", r.retries);
  read(node, "backoff_ms", r.backoff_ms);
}

}  // namespace

RunConfig parse_config(std::string_view yaml_text, const fs::path& base_dir) {
  RunConfig cfg;
  YAML::Node root;
  try {
    root = YAML::Load(interpolate_env(yaml_text));
  } catch (const YAML::Exception& e) {
    throw ConfigError(std::string("config is not valid YAML: ") + e.what());
  }
  if (!root || root.IsNull()) return cfg;
  try {
    check_keys(root, "config", {"output_dir", "seeds", "scene", "exploration", "noise", "consensus", "llm",
                                "captioner", "embedder", "training"});
    if (root["output_dir"]) cfg.output_dir = base_dir / root["output_dir"].as<std::string>();
    if (root["seeds"]) cfg.seeds = root["seeds"].as<std::vector<std::uint64_t>>();
    if (cfg.seeds.empty()) throw ConfigError("seed list is empty");

    const auto scene = root["scene"];
    check_keys(scene, "scene", {"spec", "bounds", "cell_size", "n_objects", "rooms_x", "rooms_y", "door_width",
                                "object_gap"});
    if (scene && scene["spec"]) {
      const fs::path p = base_dir / scene["spec"].as<std::string>();
      if (!fs::exists(p)) throw ConfigError("scene spec not found: " + p.string());
      cfg.scene_spec_path = p;
      cfg.scene = io::scene_spec_from_json(io::read_file(p));
    }
    if (scene && scene["bounds"]) {
      const auto b = scene["bounds"].as<std::vector<int>>();
      if (b.size() != 3) throw ConfigError("scene.bounds needs three values");
      cfg.scene.bounds = {b[0], b[1], b[2]};
    }
    read(scene, "cell_size", cfg.scene.cell_size);
    read(scene, "n_objects", cfg.scene.n_objects);
    read(scene, "rooms_x", cfg.scene.rooms_x);
    read(scene, "rooms_y", cfg.scene.rooms_y);
    read(scene, "door_width", cfg.scene.door_width);
    read(scene, "object_gap", cfg.scene.object_gap);

    const auto ex = root["exploration"];
    check_keys(ex, "exploration", {"policy", "steps", "grid_size", "unknown_cost", "cla_radius", "cla_tabu",
                                   "cla_tabu_radius", "staleness_steps", "look_around", "forward_step",
                                   "min_confidence", "min_area", "nms_iou", "bbox_margin"});
    read(ex, "policy", cfg.policy);
    policy_from_name(cfg.policy);
    read(ex, "steps", cfg.steps);
    if (cfg.steps < 0) throw ConfigError("exploration.steps must be non-negative");
    read(ex, "grid_size", cfg.episode.grid_size);
    read(ex, "unknown_cost", cfg.episode.unknown_cost);
    read(ex, "cla_radius", cfg.episode.cla_radius);
    read(ex, "cla_tabu", cfg.episode.cla_tabu);
    read(ex, "cla_tabu_radius", cfg.episode.cla_tabu_radius);
    read(ex, "staleness_steps", cfg.episode.staleness_steps);
    read(ex, "look_around", cfg.episode.look_around);
    read(ex, "forward_step", cfg.episode.forward_step);
    read(ex, "min_confidence", cfg.episode.filter.min_confidence);
    read(ex, "min_area", cfg.episode.filter.min_area_reference);
    read(ex, "nms_iou", cfg.episode.filter.nms_iou);
    read(ex, "bbox_margin", cfg.episode.detector.bbox_margin);

    const auto noise = root["noise"];
    check_keys(noise, "noise", {"preset", "p_attr_swap", "p_category_swap", "p_hallucinate", "p_drop_detail",
                                "occlusion_boost", "difficulty_boost", "p_boilerplate"});
    read(noise, "preset", cfg.noise_preset);
    cfg.noise = noise_preset(cfg.noise_preset);
    read(noise, "p_attr_swap", cfg.noise.p_attr_swap);
    read(noise, "p_category_swap", cfg.noise.p_category_swap);
    read(noise, "p_hallucinate", cfg.noise.p_hallucinate);
    read(noise, "p_drop_detail", cfg.noise.p_drop_detail);
    read(noise, "occlusion_boost", cfg.noise.occlusion_boost);
    read(noise, "difficulty_boost", cfg.noise.difficulty_boost);
    read(noise, "p_boilerplate", cfg.noise.p_boilerplate);

    const auto cons = root["consensus"];
    check_keys(cons, "consensus", {"method", "eco_alpha", "include_object_class", "parse_retries", "max_in_flight"});
    if (cons && cons["method"]) cfg.consensus.method = method_from_name(cons["method"].as<std::string>());
    read(cons, "eco_alpha", cfg.consensus.eco_alpha);
    read(cons, "include_object_class", cfg.consensus.include_object_class);
    read(cons, "parse_retries", cfg.consensus.parse_retries);
    read(cons, "max_in_flight", cfg.consensus.max_in_flight);
    if (cfg.consensus.eco_alpha < 0.0 || cfg.consensus.eco_alpha > 1.0) throw ConfigError("eco_alpha must lie in [0, 1]");

    const auto llm = root["llm"];
    check_keys(llm, "llm", {"url", "token", "model", "max_tokens", "timeout_s", "retries", "backoff_ms"});
    read_remote(llm, cfg.llm.remote);
    read(llm, "model", cfg.llm.model);
    read(llm, "max_tokens", cfg.llm.max_tokens);

    for (auto [name, ep] : {std::pair{"captioner", &cfg.captioner}, std::pair{"embedder", &cfg.embedder}}) {
      const auto node = root[name];
      check_keys(node, name, {"kind", "url", "token", "dim", "timeout_s", "retries", "backoff_ms"});
      read(node, "kind", ep->kind);
      read_remote(node, ep->remote);
      read(node, "dim", ep->dim);
    }
    if (cfg.captioner.kind != "noisy-sim" && cfg.captioner.kind != "remote") {
      throw ConfigError("captioner.kind must be noisy-sim or remote");
    }
    if (cfg.embedder.kind != "hashing" && cfg.embedder.kind != "remote") {
      throw ConfigError("embedder.kind must be hashing or remote");
    }
    for (const auto* ep : {&cfg.captioner, &cfg.embedder}) {
      if (ep->kind == "remote" && ep->remote.url.empty()) throw ConfigError("remote " + ep->kind + " needs a url");
    }

    const auto tr = root["training"];
    check_keys(tr, "training", {"lambda_tr", "margin", "learning_rate", "weight_decay", "batch_size", "epochs",
                                "patience", "val_fraction", "ablation"});
    read(tr, "lambda_tr", cfg.loss.lambda_tr);
    read(tr, "margin", cfg.loss.margin);
    read(tr, "learning_rate", cfg.loss.learning_rate);
    read(tr, "weight_decay", cfg.loss.weight_decay);
    read(tr, "batch_size", cfg.loss.batch_size);
    read(tr, "epochs", cfg.loss.epochs);
    read(tr, "patience", cfg.loss.patience);
    read(tr, "val_fraction", cfg.loss.val_fraction);
    read(tr, "ablation", cfg.ablation);
    if (cfg.loss.lambda_tr < 0.0) throw ConfigError("training.lambda_tr must be non-negative");
    if (cfg.loss.margin <= 0.0) throw ConfigError("training.margin must be positive");
    if (cfg.loss.batch_size < 1 || cfg.loss.epochs < 0 || cfg.loss.patience < 1) {
      throw ConfigError("training batch_size, epochs and patience must be positive");
    }
  } catch (const YAML::Exception& e) {
    throw ConfigError(std::string("bad config value: ") + e.what());
  } catch (const ParseError& e) {
    throw ConfigError(e.what());
  } catch (const ContractError& e) {
    throw ConfigError(e.what());
  }
  cfg.episode.policy = policy_from_name(cfg.policy);
  cfg.episode.n_steps = cfg.steps;
  cfg.consensus.request_template.model = cfg.llm.model;
  cfg.consensus.request_template.max_tokens = cfg.llm.max_tokens;
  return cfg;
}

RunConfig load_config(const fs::path& path) {
  if (!fs::exists(path)) throw ConfigError("config not found: " + path.string());
  return parse_config(io::read_file(path), path.parent_path().empty() ? fs::path(".") : path.parent_path());
}

std::string canonical_config(const RunConfig& c) {
  const auto& e = c.episode;
  const auto& n = c.noise;
  json j = {
      {"scene", json::parse(io::scene_spec_to_json(c.scene))},
      {"exploration",
       {{"policy", c.policy}, {"steps", c.steps}, {"grid_size", e.grid_size}, {"unknown_cost", e.unknown_cost},
        {"cla_radius", e.cla_radius}, {"cla_tabu", e.cla_tabu}, {"cla_tabu_radius", e.cla_tabu_radius},
        {"staleness_steps", e.staleness_steps}, {"look_around", e.look_around}, {"forward_step", e.forward_step},
        {"min_confidence", e.filter.min_confidence}, {"min_area", e.filter.min_area_reference},
        {"nms_iou", e.filter.nms_iou}, {"bbox_margin", e.detector.bbox_margin}}},
      {"noise",
       {{"preset", c.noise_preset}, {"p_attr_swap", n.p_attr_swap}, {"p_category_swap", n.p_category_swap},
        {"p_hallucinate", n.p_hallucinate}, {"p_drop_detail", n.p_drop_detail},
        {"occlusion_boost", n.occlusion_boost}, {"difficulty_boost", n.difficulty_boost},
        {"p_boilerplate", n.p_boilerplate}}},
      {"consensus",
       {{"method", method_name(c.consensus.method)}, {"eco_alpha", c.consensus.eco_alpha},
        {"include_object_class", c.consensus.include_object_class}, {"parse_retries", c.consensus.parse_retries}}},
      {"llm", {{"enabled", !c.llm.remote.url.empty()}, {"model", c.llm.model}, {"max_tokens", c.llm.max_tokens}}},
      {"captioner", c.captioner.kind},
      {"embedder", {{"kind", c.embedder.kind}, {"dim", c.embedder.dim}}},
      {"training",
       {{"lambda_tr", c.loss.lambda_tr}, {"margin", c.loss.margin}, {"learning_rate", c.loss.learning_rate},
        {"weight_decay", c.loss.weight_decay}, {"batch_size", c.loss.batch_size}, {"epochs", c.loss.epochs},
        {"patience", c.loss.patience}, {"val_fraction", c.loss.val_fraction}, {"ablation", c.ablation}}},
      {"seeds", c.seeds}};
  return j.dump();
}

std::string export_annotations(const Scene& scene, std::vector<std::string>* warnings) {
  if (scene.objects().empty() && warnings) warnings->push_back("scene has no objects; annotations are empty");
  return io::annotations_jsonl(scene);
}

// ---------------------------------------------------------------------------
// Phase helpers
// ---------------------------------------------------------------------------

std::unique_ptr<Captioner> make_captioner(const RunConfig& cfg) {
  if (cfg.captioner.kind == "remote") {
    RemoteConfig r = cfg.captioner.remote;
    if (r.token.empty()) {
      if (const char* t = std::getenv(kEnvApiToken)) r.token = t;
    }
    return std::make_unique<RemoteCaptioner>(r);
  }
  return std::make_unique<NoisyCaptioner>(cfg.noise);
}

std::unique_ptr<Embedder> make_embedder(const RunConfig& cfg) {
  if (cfg.embedder.kind == "remote") {
    RemoteConfig r = cfg.embedder.remote;
    if (r.token.empty()) {
      if (const char* t = std::getenv(kEnvApiToken)) r.token = t;
    }
    return std::make_unique<RemoteEmbedder>(r, cfg.embedder.dim);
  }
  return std::make_unique<HashingEmbedder>(cfg.embedder.dim);
}

std::unique_ptr<LlmClient> make_llm(const RunConfig& cfg) {
  RemoteConfig r = cfg.llm.remote;
  if (r.url.empty()) {
    auto env = remote_from_env(kEnvLlmUrl, kEnvLlmKey);
    if (!env) return nullptr;
    r.url = env->url;
    if (r.token.empty()) r.token = env->token;
  }
  return std::make_unique<HttpLlmClient>(r, cfg.llm.model);
}

Scene scene_for(const RunConfig& cfg, std::uint64_t seed) { return generate_scene(seed, cfg.scene); }

MapBuild build_map(const EpisodeLog& log) {
  MapBuild b{replay_map(log), {}};
  b.instances = cluster_objects(b.map);
  return b;
}

std::vector<InstanceCaptions> instance_captions(const std::vector<ObjectInstance>& instances,
                                                const std::vector<CaptionRecord>& captions, const Scene* scene) {
  std::map<std::uint64_t, const CaptionRecord*> by_id;
  for (const auto& c : captions) by_id[c.id] = &c;
  std::vector<InstanceCaptions> out;
  for (const auto& inst : instances) {
    InstanceCaptions ic;
    ic.instance_id = inst.instance_id;
    ic.pseudo_label = inst.pseudo_label;
    std::map<int, int> votes;
    for (auto id : inst.captions) {
      auto it = by_id.find(id);
      if (it == by_id.end()) throw ContractError("instance references unknown caption " + std::to_string(id));
      ic.captions.push_back(*it->second);
      ++votes[it->second->object_id_gt];
    }
    int best = 0;
    for (const auto& [obj, n] : votes) {
      if (n > best) {
        best = n;
        ic.object_id = obj;
      }
    }
    if (scene) {
      for (const auto& o : scene->objects()) {
        if (o.id == ic.object_id) ic.proxy_text = join(o.attribute_tokens, " ");
      }
    }
    out.push_back(std::move(ic));
  }
  return out;
}

io::PseudoFile run_consensus(const EpisodeLog& log, const MapBuild& built, const Scene* scene,
                             const ConsensusConfig& cfg, LlmClient* llm, const Embedder& embedder) {
  const auto ics = instance_captions(built.instances, all_captions(log), scene);
  const auto result = pseudo_caption_all(ics, cfg, llm, embedder);
  io::PseudoFile f;
  f.method = std::string(method_name(cfg.method));
  f.policy = log.policy;
  f.seed = log.seed;
  f.skipped = result.skipped;
  std::map<int, const InstanceCaptions*> by_inst;
  for (const auto& ic : ics) by_inst[ic.instance_id] = &ic;
  for (const auto& pc : result.captions) {
    io::PseudoRecord r;
    r.caption = pc;
    const auto* ic = by_inst.at(pc.instance_id);
    r.pseudo_label = ic->pseudo_label;
    for (const auto& c : ic->captions) r.views.push_back({pc.instance_id, c.label, c.text, c.visible_fraction});
    f.records.push_back(std::move(r));
  }
  return f;
}

std::vector<View> pseudo_views(const io::PseudoFile& pseudo) {
  std::vector<View> out;
  for (const auto& r : pseudo.records) out.insert(out.end(), r.views.begin(), r.views.end());
  return out;
}

TrainingOutcome run_training(const io::PseudoFile& pseudo, const LossConfig& loss, bool ablation,
                             const Embedder& embedder, std::uint64_t seed) {
  TrainingOutcome out;
  out.views = pseudo_views(pseudo);
  if (out.views.empty()) throw ContractError("no views to train on");
  Rng rng(seed);
  Rng init = rng.split(11);
  const std::uint64_t pre_seed = rng.split(12).next_u64();
  const std::uint64_t tune_seed = rng.split(13).next_u64();
  const Vocabulary vocab;
  const ToyCaptioner m0(vocab, kDefaultFeatures, kDefaultLength, init);
  const auto raw = raw_caption_examples(out.views, vocab, kDefaultLength);
  out.base = finetune(m0, raw, pretrain_config(), pre_seed).model;

  std::map<int, std::string> targets;
  for (const auto& r : pseudo.records) targets[r.caption.instance_id] = r.caption.text;
  const auto examples = pseudo_caption_examples(out.views, targets, vocab, kDefaultLength);
  out.tuned = finetune(out.base, examples, loss, tune_seed);
  if (ablation) {
    const auto lambdas = ablation_lambdas();
    out.ablation = lambda_ablation(out.base, examples, out.views, embedder, loss, lambdas, tune_seed);
  }
  return out;
}

namespace {

// Record index per ground-truth object: most views, then lowest instance id.
std::map<int, std::size_t> best_record_per_object(const io::PseudoFile& pseudo) {
  std::map<int, std::size_t> best;
  for (std::size_t i = 0; i < pseudo.records.size(); ++i) {
    const auto& r = pseudo.records[i];
    if (r.caption.object_id < 0 || r.caption.text.empty()) continue;
    auto it = best.find(r.caption.object_id);
    if (it == best.end()) {
      best[r.caption.object_id] = i;
      continue;
    }
    const auto& cur = pseudo.records[it->second];
    if (r.views.size() > cur.views.size() ||
        (r.views.size() == cur.views.size() && r.caption.instance_id < cur.caption.instance_id)) {
      it->second = i;
    }
  }
  return best;
}

}  // namespace

std::map<std::string, std::string> predictions_by_object(const io::PseudoFile& pseudo) {
  std::map<std::string, std::string> out;
  for (const auto& [obj, i] : best_record_per_object(pseudo)) out[std::to_string(obj)] = pseudo.records[i].caption.text;
  return out;
}

std::map<std::string, std::string> model_predictions(const ToyCaptioner& model, const io::PseudoFile& pseudo) {
  std::map<std::string, std::string> out;
  for (const auto& [obj, i] : best_record_per_object(pseudo)) {
    const auto& views = pseudo.records[i].views;
    if (views.empty()) continue;
    const View* best = &views.front();
    for (const auto& v : views) {
      if (v.visible_fraction > best->visible_fraction) best = &v;
    }
    out[std::to_string(obj)] = model.generate(*best);
  }
  return out;
}

std::map<std::string, std::string> annotation_map(const std::vector<io::Annotation>& anns) {
  std::map<std::string, std::string> out;
  for (const auto& a : anns) out[std::to_string(a.object_id)] = a.gt_caption;
  return out;
}

// ---------------------------------------------------------------------------
// Orchestration
// ---------------------------------------------------------------------------

namespace {

std::string utc_now() {
  const auto t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

const std::vector<std::string>& deviation_notes() {
  static const std::vector<std::string> notes = {
      "METEOR-lite: exact and suffix-stem matching only, no synonym or paraphrase stages",
      "CLA-greedy: disagreement-mass goal selection replaces the learned exploration policy",
      "SPICE not computed",
      "hashing bag-of-words embedder replaces SBERT for CS and disagreement",
      "CIDEr reported on the x10 scale",
      "toy linear captioner replaces the fine-tuned VLM",
  };
  return notes;
}

class SeedRun {
 public:
  SeedRun(const RunConfig& cfg, std::uint64_t seed, fs::path dir, const RunOptions& opts)
      : cfg_(cfg), seed_(seed), dir_(std::move(dir)), opts_(opts) {}

  io::Manifest run() {
    fs::create_directories(dir_);
    m_.config_hash = io::sha256_hex(canonical_config(cfg_));
    m_.seed = seed_;
    m_.versions = {{"embcap", "0.1.0"},
                   {"episode", std::string(io::kEpisodeSchema)},
                   {"map", std::string(io::kMapSchema)},
                   {"pseudo", std::string(io::kPseudoSchema)},
                   {"model", std::string(io::kModelSchema)},
                   {"report", std::string(io::kReportSchema)}};
    m_.deviations = deviation_notes();
    load_previous();

    for (const char* phase : kPhases) {
      if (!skip_reason_.empty()) {
        m_.phases.push_back({phase, "skipped", skip_reason_});
        continue;
      }
      if (reusable(phase)) {
        say(std::string(phase) + ": up to date");
        continue;
      }
      fresh_ = true;
      try {
        run_phase(phase);
        m_.timestamps[phase] = utc_now();
        if (!pending_skip_.empty()) {
          skip_reason_ = pending_skip_;
          pending_skip_.clear();
        }
        m_.phases.push_back({phase, "done", ""});
      } catch (const std::exception& e) {
        m_.failure = io::PhaseStatus{phase, "failed", e.what()};
        m_.phases.push_back(*m_.failure);
        write_manifest();
        throw;
      }
      write_manifest();
    }
    write_manifest();
    return m_;
  }

 private:
  void say(const std::string& msg) {
    if (opts_.log) *opts_.log << "[seed " << seed_ << "] " << msg << "\n";
  }

  void load_previous() {
    const auto p = dir_ / "manifest.json";
    if (!opts_.resume || !fs::exists(p)) return;
    try {
      prev_ = io::manifest_from_json(io::read_file(p));
    } catch (const ParseError&) {
      return;
    }
    if (prev_->config_hash != m_.config_hash || prev_->seed != seed_) prev_.reset();
  }

  bool reusable(const std::string& phase) {
    if (fresh_ || !prev_) return false;
    auto st = std::find_if(prev_->phases.begin(), prev_->phases.end(),
                           [&](const io::PhaseStatus& s) { return s.phase == phase; });
    if (st == prev_->phases.end() || st->status != "done") return false;
    std::vector<io::ManifestEntry> entries;
    for (const auto& e : prev_->entries) {
      if (e.phase == phase) entries.push_back(e);
    }
    if (entries.empty()) return false;
    for (const auto& e : entries) {
      const auto f = dir_ / e.path;
      if (!fs::exists(f) || io::sha256_file(f) != e.sha256) return false;
    }
    m_.entries.insert(m_.entries.end(), entries.begin(), entries.end());
    m_.phases.push_back(*st);
    if (auto ts = prev_->timestamps.find(phase); ts != prev_->timestamps.end()) m_.timestamps[phase] = ts->second;
    // Downstream skips are re-derived from the reused outputs.
    pending_skip_ = skip_after(phase);
    if (!pending_skip_.empty()) {
      skip_reason_ = pending_skip_;
      pending_skip_.clear();
    }
    return true;
  }

  std::string skip_after(const std::string& phase) {
    if (phase == "explore") {
      const auto log = io::episode_from_jsonl(io::read_file(dir_ / "episode.jsonl"));
      if (log.records.empty()) return "episode has no steps";
      if (all_captions(log).empty()) return "episode collected no captions";
    } else if (phase == "build-map") {
      if (io::map_from_json(io::read_file(dir_ / "map.json")).instances.empty()) return "map has no object instances";
    } else if (phase == "consensus") {
      if (io::pseudo_from_jsonl(io::read_file(dir_ / "pseudo.jsonl")).records.empty()) return "no pseudo-captions";
    }
    return {};
  }

  void emit(const std::string& phase, const std::string& name, std::string_view content, std::string_view schema) {
    io::write_file(dir_ / name, content);
    m_.entries.push_back({phase, name, io::sha256_hex(content), std::string(schema)});
  }

  void write_manifest() { io::write_file(dir_ / "manifest.json", io::manifest_to_json(m_)); }

  Scene scene() const {
    std::uint64_t scene_seed = seed_;
    const SceneSpec spec = io::scene_spec_from_json(io::read_file(dir_ / "scene.json"), &scene_seed);
    return generate_scene(scene_seed, spec);
  }

  void run_phase(const std::string& phase) {
    say(phase);
    auto embedder = make_embedder(cfg_);
    if (phase == "explore") {
      const Scene sc = scene_for(cfg_, seed_);
      std::vector<std::string> warnings;
      emit(phase, "scene.json", io::scene_to_json(sc, cfg_.scene), io::kSceneSchema);
      emit(phase, "annotations.jsonl", export_annotations(sc, &warnings), "annotations");
      for (const auto& w : warnings) say("warning: " + w);
      auto captioner = make_captioner(cfg_);
      const auto res = run_episode(sc, cfg_.episode, seed_, *captioner, *embedder);
      emit(phase, "episode.jsonl", io::episode_to_jsonl(res.log), io::kEpisodeSchema);
    } else if (phase == "build-map") {
      const auto log = io::episode_from_jsonl(io::read_file(dir_ / "episode.jsonl"));
      const auto built = build_map(log);
      emit(phase, "map.json", io::map_to_json(built.map, built.instances), io::kMapSchema);
    } else if (phase == "consensus") {
      const auto log = io::episode_from_jsonl(io::read_file(dir_ / "episode.jsonl"));
      auto mf = io::map_from_json(io::read_file(dir_ / "map.json"));
      const Scene sc = scene();
      auto llm = make_llm(cfg_);
      const bool wants_llm =
          cfg_.consensus.method == ConsensusMethod::LdcpsLlm || cfg_.consensus.method == ConsensusMethod::Ic3;
      const auto pf = run_consensus(log, MapBuild{std::move(mf.map), std::move(mf.instances)}, &sc, cfg_.consensus,
                                    wants_llm ? llm.get() : nullptr, *embedder);
      emit(phase, "pseudo.jsonl", io::pseudo_to_jsonl(pf), io::kPseudoSchema);
    } else if (phase == "finetune") {
      const auto pf = io::pseudo_from_jsonl(io::read_file(dir_ / "pseudo.jsonl"));
      const auto out = run_training(pf, cfg_.loss, cfg_.ablation, *embedder, seed_);
      emit(phase, "base_model.json", io::model_to_json(out.base), io::kModelSchema);
      emit(phase, "model.json", io::model_to_json(out.tuned.model), io::kModelSchema);
      io::TrainingLog tl;
      tl.finetune = {cfg_.loss.lambda_tr, out.tuned.history, out.tuned.best_epoch, out.tuned.stopped_early};
      tl.ablation = out.ablation;
      emit(phase, "training.json", io::training_to_json(tl), io::kTrainingSchema);
      if (!out.ablation.empty()) emit(phase, "ablation.md", ablation_markdown(out.ablation), "markdown");
    } else if (phase == "consistency") {
      const auto pf = io::pseudo_from_jsonl(io::read_file(dir_ / "pseudo.jsonl"));
      const auto base = io::model_from_json(io::read_file(dir_ / "base_model.json"));
      const auto tuned = io::model_from_json(io::read_file(dir_ / "model.json"));
      const auto views = pseudo_views(pf);
      io::ConsistencyPair cp{consistency_score(base, views, *embedder), consistency_score(tuned, views, *embedder)};
      emit(phase, "consistency.json", io::consistency_to_json(cp), io::kConsistencySchema);
      emit(phase, "consistency.csv", io::consistency_csv(cp.post), "csv");
    } else if (phase == "evaluate") {
      const auto pf = io::pseudo_from_jsonl(io::read_file(dir_ / "pseudo.jsonl"));
      const auto anns = annotation_map(io::parse_annotations(io::read_file(dir_ / "annotations.jsonl")));
      io::RunReport rep;
      rep.seed = seed_;
      rep.policy = pf.policy;
      rep.method = pf.method;
      rep.captioner = cfg_.captioner.kind;
      rep.notes = deviation_notes();
      auto tag = [&](MetricsReport m) {
        m.method = rep.method;
        m.policy = rep.policy;
        m.captioner = rep.captioner;
        return m;
      };
      const auto preds = predictions_by_object(pf);
      if (!preds.empty()) rep.metrics = tag(evaluate_run(preds, anns, *embedder));
      const auto base = io::model_from_json(io::read_file(dir_ / "base_model.json"));
      const auto tuned = io::model_from_json(io::read_file(dir_ / "model.json"));
      if (!preds.empty()) {
        rep.captioner_before = tag(evaluate_run(model_predictions(base, pf), anns, *embedder));
        rep.captioner_after = tag(evaluate_run(model_predictions(tuned, pf), anns, *embedder));
      }
      const auto cp = io::consistency_from_json(io::read_file(dir_ / "consistency.json"));
      rep.consistency_pre = cp.pre;
      rep.consistency_post = cp.post;
      const auto tl = io::training_from_json(io::read_file(dir_ / "training.json"));
      rep.finetune = tl.finetune;
      rep.ablation = tl.ablation;
      emit(phase, "report.json", io::report_to_json(rep), io::kReportSchema);
    }
    pending_skip_ = skip_after(phase);
  }

  const RunConfig& cfg_;
  std::uint64_t seed_;
  fs::path dir_;
  RunOptions opts_;
  io::Manifest m_;
  std::optional<io::Manifest> prev_;
  bool fresh_ = false;
  std::string skip_reason_;
  std::string pending_skip_;
};

}  // namespace

io::Manifest run_seed(const RunConfig& cfg, std::uint64_t seed, const fs::path& dir, const RunOptions& opts) {
  return SeedRun(cfg, seed, dir, opts).run();
}

std::vector<io::Manifest> run_pipeline(const RunConfig& cfg, const RunOptions& opts) {
  std::vector<io::Manifest> out;
  for (auto seed : cfg.seeds) out.push_back(run_seed(cfg, seed, cfg.output_dir / ("seed-" + std::to_string(seed)), opts));
  return out;
}

std::vector<std::string> verify_manifest(const io::Manifest& m, const fs::path& dir) {
  std::vector<std::string> bad;
  for (const auto& e : m.entries) {
    const auto p = dir / e.path;
    if (!fs::exists(p) || io::sha256_file(p) != e.sha256) bad.push_back(e.path);
  }
  return bad;
}

// ---------------------------------------------------------------------------
// Reports
// ---------------------------------------------------------------------------

namespace {

std::string full(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string shortest(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%g", v);
  return buf;
}

std::string fixed2(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

struct Mean {
  double sum = 0.0;
  int n = 0;
  void add(double v) {
    sum += v;
    ++n;
  }
  std::optional<double> get() const {
    if (n == 0) return std::nullopt;
    return sum / n;
  }
};

struct Row {
  std::string policy;
  std::vector<std::string> labels;
  int seeds = 0;
  std::vector<std::optional<double>> values;
};

struct Table {
  std::vector<std::string> label_cols;
  std::vector<std::string> value_cols;
  std::vector<Row> rows;
};

void render(const Table& t, std::string& csv, std::string& md) {
  std::ostringstream c, m;
  c << "policy";
  m << "| policy";
  for (const auto& l : t.label_cols) {
    c << "," << l;
    m << " | " << l;
  }
  c << ",seeds";
  m << " | seeds";
  for (const auto& v : t.value_cols) {
    c << "," << v;
    m << " | " << v;
  }
  c << "\n";
  m << " |\n|";
  for (std::size_t i = 0; i < 2 + t.label_cols.size() + t.value_cols.size(); ++i) m << "---|";
  m << "\n";

  // Best value per column within each policy.
  std::map<std::string, std::vector<std::optional<double>>> best;
  for (const auto& r : t.rows) {
    auto& b = best.try_emplace(r.policy, t.value_cols.size()).first->second;
    for (std::size_t k = 0; k < r.values.size(); ++k) {
      if (r.values[k] && (!b[k] || *r.values[k] > *b[k])) b[k] = r.values[k];
    }
  }
  for (const auto& r : t.rows) {
    c << r.policy;
    m << "| " << r.policy;
    for (const auto& l : r.labels) {
      c << "," << l;
      m << " | " << l;
    }
    c << "," << r.seeds;
    m << " | " << r.seeds;
    const auto& b = best.at(r.policy);
    for (std::size_t k = 0; k < r.values.size(); ++k) {
      if (!r.values[k]) {
        c << ",";
        m << " | n/a";
        continue;
      }
      c << "," << full(*r.values[k]);
      const bool top = b[k] && *b[k] == *r.values[k];
      m << " | " << (top ? "**" : "") << fixed2(*r.values[k]) << (top ? "**" : "");
    }
    c << "\n";
    m << " |\n";
  }
  csv = c.str();
  md = m.str();
}

const std::vector<std::string> kMetricCols = {"BLEU-4", "METEOR", "ROUGE-L", "CIDEr", "CS"};

void add_metrics(std::vector<Mean>& acc, const MetricsReport& m) {
  acc[0].add(m.mean_bleu4);
  acc[1].add(m.mean_meteor);
  acc[2].add(m.mean_rouge_l);
  if (m.mean_cider) acc[3].add(*m.mean_cider);
  acc[4].add(m.mean_cs);
}

}  // namespace

ReportTables build_report(const std::vector<io::RunReport>& reports) {
  if (reports.empty()) throw ReportError("no reports to tabulate");

  struct Group1 {
    int seeds = 0;
    std::vector<Mean> m = std::vector<Mean>(5);
  };
  std::map<std::pair<std::string, std::string>, Group1> g1;
  struct Group2 {
    int seeds = 0;
    std::vector<Mean> before = std::vector<Mean>(5), after = std::vector<Mean>(5);
    Mean cons_pre, cons_post;
  };
  std::map<std::tuple<std::string, std::string, double>, Group2> g2;

  for (const auto& r : reports) {
    if (r.metrics) {
      auto& g = g1[{r.policy, r.method}];
      ++g.seeds;
      add_metrics(g.m, *r.metrics);
    }
    if (r.finetune && r.captioner_before && r.captioner_after) {
      auto& g = g2[{r.policy, r.method, r.finetune->lambda_tr}];
      ++g.seeds;
      add_metrics(g.before, *r.captioner_before);
      add_metrics(g.after, *r.captioner_after);
      if (r.consistency_pre && r.consistency_pre->summary) g.cons_pre.add(r.consistency_pre->summary->median);
      if (r.consistency_post && r.consistency_post->summary) g.cons_post.add(r.consistency_post->summary->median);
    }
  }

  Table t1{{"method"}, kMetricCols, {}};
  for (const auto& [key, g] : g1) {
    Row row{key.first, {key.second}, g.seeds, {}};
    for (const auto& m : g.m) row.values.push_back(m.get());
    t1.rows.push_back(std::move(row));
  }
  auto cols2 = kMetricCols;
  cols2.push_back("consistency median");
  Table t2{{"method", "captioner", "lambda_tr"}, cols2, {}};
  for (const auto& [key, g] : g2) {
    const auto& [policy, method, lambda] = key;
    Row before{policy, {method, "base", ""}, g.seeds, {}};
    for (const auto& m : g.before) before.values.push_back(m.get());
    before.values.push_back(g.cons_pre.get());
    Row after{policy, {method, "fine-tuned", shortest(lambda)}, g.seeds, {}};
    for (const auto& m : g.after) after.values.push_back(m.get());
    after.values.push_back(g.cons_post.get());
    t2.rows.push_back(std::move(before));
    t2.rows.push_back(std::move(after));
  }

  ReportTables out;
  render(t1, out.table1_csv, out.table1_md);
  render(t2, out.table2_csv, out.table2_md);
  out.table1_rows = t1.rows.size();
  out.table2_rows = t2.rows.size();
  return out;
}

std::vector<io::RunReport> load_reports(const std::vector<fs::path>& paths) {
  std::vector<io::RunReport> out;
  for (const auto& p : paths) {
    try {
      // A pipeline output directory: every run below it that produced a report.
      if (fs::is_directory(p) && !fs::exists(p / "manifest.json") && !fs::exists(p / "report.json")) {
        std::vector<fs::path> runs;
        for (const auto& d : fs::directory_iterator(p)) {
          if (d.is_directory() && fs::exists(d.path() / "manifest.json")) runs.push_back(d.path());
        }
        std::sort(runs.begin(), runs.end());
        std::size_t found = 0;
        for (const auto& r : runs) {
          const auto m = io::manifest_from_json(io::read_file(r / "manifest.json"));
          const bool has_report = std::any_of(m.entries.begin(), m.entries.end(),
                                              [](const auto& e) { return e.path == "report.json"; });
          if (!has_report) {
            std::fprintf(stderr, "warning: %s has no report, skipped\n", r.string().c_str());
            continue;
          }
          auto sub = load_reports({r});
          out.insert(out.end(), sub.begin(), sub.end());
          ++found;
        }
        if (found == 0) throw ReportError("no run reports under " + p.string());
        continue;
      }
      fs::path report;
      if (fs::is_directory(p)) {
        report = p / "report.json";
        if (fs::exists(p / "manifest.json")) {
          const auto m = io::manifest_from_json(io::read_file(p / "manifest.json"));
          report.clear();
          for (const auto& e : m.entries) {
            if (e.path == "report.json") report = p / e.path;
          }
          if (report.empty()) throw ReportError("manifest in " + p.string() + " lists no report.json");
        }
      } else if (p.filename() == "manifest.json") {
        const auto m = io::manifest_from_json(io::read_file(p));
        for (const auto& e : m.entries) {
          if (e.path == "report.json") report = p.parent_path() / e.path;
        }
        if (report.empty()) throw ReportError("manifest " + p.string() + " lists no report.json");
      } else {
        report = p;
      }
      out.push_back(io::report_from_json(io::read_file(report)));
    } catch (const ParseError& e) {
      throw ReportError(p.string() + ": " + e.what());
    }
  }
  return out;
}

}  // namespace embcap
