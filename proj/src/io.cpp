#include "embcap/io.hpp"

#include <openssl/evp.h>

#include <fstream>
#include <sstream>

#include "json.hpp"

namespace embcap::io {

using nlohmann::json;

namespace {

json parse_doc(std::string_view text, std::string_view what) {
  try {
    return json::parse(text);
  } catch (const json::exception& e) {
    throw ParseError(std::string(what) + ": " + e.what());
  }
}

void expect_schema(const json& j, std::string_view schema) {
  if (!j.is_object() || !j.contains("schema")) throw ParseError("document has no schema tag");
  const auto got = j.at("schema").get<std::string>();
  if (got != schema) {
    throw ParseError("schema mismatch: expected " + std::string(schema) + ", found " + got);
  }
}

std::vector<std::string_view> split_lines(std::string_view text) {
  std::vector<std::string_view> out;
  std::size_t pos = 0;
  while (pos < text.size()) {
    auto nl = text.find('\n', pos);
    if (nl == std::string_view::npos) nl = text.size();
    auto line = text.substr(pos, nl - pos);
    if (line.find_first_not_of(" \t\r") != std::string_view::npos) out.push_back(line);
    pos = nl + 1;
  }
  return out;
}

// Wraps nlohmann access errors in ParseError so callers see one error type.
template <typename F>
auto guarded(std::string_view what, F&& f) -> decltype(f()) {
  try {
    return f();
  } catch (const json::exception& e) {
    throw ParseError(std::string(what) + ": " + e.what());
  }
}

json vec3_json(const Vec3& v) { return json::array({v.x, v.y, v.z}); }
Vec3 vec3_from(const json& j) { return {j.at(0).get<double>(), j.at(1).get<double>(), j.at(2).get<double>()}; }

json agent_json(const AgentState& a) {
  return {{"position", vec3_json(a.position)}, {"yaw", a.yaw}, {"step_index", a.step_index}};
}
AgentState agent_from(const json& j) {
  AgentState a;
  a.position = vec3_from(j.at("position"));
  a.yaw = j.at("yaw").get<double>();
  a.step_index = j.at("step_index").get<int>();
  return a;
}

json pose_json(const CameraPose& p) { return {{"position", vec3_json(p.position)}, {"yaw", p.yaw}}; }
CameraPose pose_from(const json& j) { return {vec3_from(j.at("position")), j.at("yaw").get<double>()}; }

json camera_json(const CameraConfig& c) {
  return {{"fov", c.fov},
          {"width", c.width},
          {"height", c.height},
          {"max_range", c.max_range},
          {"mount_height", c.mount_height}};
}
CameraConfig camera_from(const json& j) {
  CameraConfig c;
  c.fov = j.at("fov").get<double>();
  c.width = j.at("width").get<int>();
  c.height = j.at("height").get<int>();
  c.max_range = j.at("max_range").get<double>();
  c.mount_height = j.at("mount_height").get<double>();
  return c;
}

json caption_json(const CaptionRecord& c) {
  return {{"id", c.id},
          {"text", c.text},
          {"object_id_gt", c.object_id_gt},
          {"view_pose", pose_json(c.view_pose)},
          {"corrupted", c.corrupted},
          {"visible_fraction", c.visible_fraction},
          {"label", c.label}};
}
CaptionRecord caption_from(const json& j) {
  CaptionRecord c;
  c.id = j.at("id").get<std::uint64_t>();
  c.text = j.at("text").get<std::string>();
  c.object_id_gt = j.at("object_id_gt").get<int>();
  c.view_pose = pose_from(j.at("view_pose"));
  c.corrupted = j.at("corrupted").get<bool>();
  c.visible_fraction = j.at("visible_fraction").get<double>();
  c.label = j.at("label").get<int>();
  return c;
}

json bbox_json(const BBox& b) { return json::array({b.x0, b.y0, b.x1, b.y1}); }
BBox bbox_from(const json& j) {
  return {j.at(0).get<int>(), j.at(1).get<int>(), j.at(2).get<int>(), j.at(3).get<int>()};
}

json key_json(const VoxelKey& k) { return json::array({k.x, k.y, k.z}); }
VoxelKey key_from(const json& j) { return {j.at(0).get<int>(), j.at(1).get<int>(), j.at(2).get<int>()}; }

json quartiles_json(const Quartiles& q) {
  return {{"min", q.min}, {"q1", q.q1}, {"median", q.median}, {"q3", q.q3}, {"max", q.max}};
}
Quartiles quartiles_from(const json& j) {
  return {j.at("min").get<double>(), j.at("q1").get<double>(), j.at("median").get<double>(),
          j.at("q3").get<double>(), j.at("max").get<double>()};
}

json consistency_json(const ConsistencyReport& c) {
  json j = {{"instance_ids", c.instance_ids}, {"scores", c.scores}};
  j["summary"] = c.summary ? quartiles_json(*c.summary) : json(nullptr);
  return j;
}
ConsistencyReport consistency_from(const json& j) {
  ConsistencyReport c;
  c.instance_ids = j.at("instance_ids").get<std::vector<int>>();
  c.scores = j.at("scores").get<std::vector<double>>();
  if (!j.at("summary").is_null()) c.summary = quartiles_from(j.at("summary"));
  return c;
}

json opt_double(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }
std::optional<double> opt_double_from(const json& j) {
  if (j.is_null()) return std::nullopt;
  return j.get<double>();
}

json metrics_json(const MetricsReport& m) {
  json inst = json::array();
  for (const auto& s : m.instances) {
    inst.push_back({{"key", s.key},
                    {"bleu4", s.bleu4},
                    {"meteor", s.meteor},
                    {"rouge_l", s.rouge_l},
                    {"cider", opt_double(s.cider)},
                    {"cs", s.cs},
                    {"cs_zero_warning", s.cs_zero_warning}});
  }
  return {{"method", m.method},
          {"policy", m.policy},
          {"captioner", m.captioner},
          {"bleu4", m.mean_bleu4},
          {"meteor", m.mean_meteor},
          {"rouge_l", m.mean_rouge_l},
          {"cider", opt_double(m.mean_cider)},
          {"cs", m.mean_cs},
          {"missing", m.missing},
          {"unannotated", m.unannotated},
          {"instances", inst}};
}
MetricsReport metrics_from(const json& j) {
  MetricsReport m;
  m.method = j.at("method").get<std::string>();
  m.policy = j.at("policy").get<std::string>();
  m.captioner = j.at("captioner").get<std::string>();
  m.mean_bleu4 = j.at("bleu4").get<double>();
  m.mean_meteor = j.at("meteor").get<double>();
  m.mean_rouge_l = j.at("rouge_l").get<double>();
  m.mean_cider = opt_double_from(j.at("cider"));
  m.mean_cs = j.at("cs").get<double>();
  m.missing = j.at("missing").get<std::vector<std::string>>();
  m.unannotated = j.at("unannotated").get<std::vector<std::string>>();
  for (const auto& s : j.at("instances")) {
    InstanceScores x;
    x.key = s.at("key").get<std::string>();
    x.bleu4 = s.at("bleu4").get<double>();
    x.meteor = s.at("meteor").get<double>();
    x.rouge_l = s.at("rouge_l").get<double>();
    x.cider = opt_double_from(s.at("cider"));
    x.cs = s.at("cs").get<double>();
    x.cs_zero_warning = s.at("cs_zero_warning").get<bool>();
    m.instances.push_back(std::move(x));
  }
  return m;
}

json finetune_json(const FinetuneSummary& f) {
  json hist = json::array();
  for (const auto& e : f.history) {
    hist.push_back({{"epoch", e.epoch}, {"train_loss", e.train_loss}, {"val_loss", e.val_loss}});
  }
  return {{"lambda_tr", f.lambda_tr},
          {"history", hist},
          {"best_epoch", f.best_epoch},
          {"stopped_early", f.stopped_early}};
}
FinetuneSummary finetune_from(const json& f) {
  FinetuneSummary s;
  s.lambda_tr = f.at("lambda_tr").get<double>();
  s.best_epoch = f.at("best_epoch").get<int>();
  s.stopped_early = f.at("stopped_early").get<bool>();
  for (const auto& e : f.at("history")) {
    s.history.push_back({e.at("epoch").get<int>(), e.at("train_loss").get<double>(), e.at("val_loss").get<double>()});
  }
  return s;
}

json ablation_json(const std::vector<AblationRow>& rows) {
  json abl = json::array();
  for (const auto& a : rows) {
    abl.push_back({{"lambda_tr", a.lambda_tr},
                   {"initial_train_loss", a.initial_train_loss},
                   {"final_train_loss", a.final_train_loss},
                   {"best_val_loss", a.best_val_loss},
                   {"epochs_run", a.epochs_run},
                   {"consistency_median", a.consistency_median},
                   {"converged", a.converged}});
  }
  return abl;
}
std::vector<AblationRow> ablation_from(const json& j) {
  std::vector<AblationRow> out;
  for (const auto& a : j) {
    AblationRow row;
    row.lambda_tr = a.at("lambda_tr").get<double>();
    row.initial_train_loss = a.at("initial_train_loss").get<double>();
    row.final_train_loss = a.at("final_train_loss").get<double>();
    row.best_val_loss = a.at("best_val_loss").get<double>();
    row.epochs_run = a.at("epochs_run").get<int>();
    row.consistency_median = a.at("consistency_median").get<double>();
    row.converged = a.at("converged").get<bool>();
    out.push_back(row);
  }
  return out;
}

json opt_metrics(const std::optional<MetricsReport>& m) { return m ? metrics_json(*m) : json(nullptr); }
std::optional<MetricsReport> opt_metrics_from(const json& j) {
  if (j.is_null()) return std::nullopt;
  return metrics_from(j);
}

json phase_json(const PhaseStatus& p) { return {{"phase", p.phase}, {"status", p.status}, {"reason", p.reason}}; }
PhaseStatus phase_from(const json& j) {
  return {j.at("phase").get<std::string>(), j.at("status").get<std::string>(), j.at("reason").get<std::string>()};
}

}  // namespace

// ---------------------------------------------------------------------------
// Files and hashes
// ---------------------------------------------------------------------------

std::string read_file(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw ParseError("cannot open " + p.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const std::filesystem::path& p, std::string_view content) {
  if (p.has_parent_path()) std::filesystem::create_directories(p.parent_path());
  auto tmp = p;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot write " + tmp.string());
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
    if (!out) throw Error("short write to " + tmp.string());
  }
  std::filesystem::rename(tmp, p);
}

std::string sha256_hex(std::string_view data) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(data.data(), data.size(), digest, &len, EVP_sha256(), nullptr) != 1) {
    throw Error("sha256 failed");
  }
  static constexpr char kHex[] = "0123456789abcdef";
  std::string out;
  for (unsigned int i = 0; i < len; ++i) {
    out += kHex[digest[i] >> 4];
    out += kHex[digest[i] & 0xf];
  }
  return out;
}

std::string sha256_file(const std::filesystem::path& p) { return sha256_hex(read_file(p)); }

// ---------------------------------------------------------------------------
// Scene and annotations
// ---------------------------------------------------------------------------

std::string scene_spec_to_json(const SceneSpec& s) {
  json j = {{"bounds", {s.bounds.nx, s.bounds.ny, s.bounds.nz}},
            {"cell_size", s.cell_size},
            {"n_objects", s.n_objects},
            {"rooms_x", s.rooms_x},
            {"rooms_y", s.rooms_y},
            {"door_width", s.door_width},
            {"object_gap", s.object_gap},
            {"max_attempts_per_object", s.max_attempts_per_object}};
  return j.dump(2);
}

std::string scene_to_json(const Scene& scene, const SceneSpec& spec) {
  json objs = json::array();
  for (const auto& o : scene.objects()) {
    objs.push_back({{"id", o.id},
                    {"category", std::string(category_name(o.category))},
                    {"attribute_tokens", o.attribute_tokens},
                    {"gt_caption", o.gt_caption},
                    {"difficulty", o.difficulty},
                    {"voxels", o.voxels.size()}});
  }
  json j = {{"schema", kSceneSchema},
            {"seed", scene.seed()},
            {"spec", json::parse(scene_spec_to_json(spec))},
            {"objects", objs}};
  return j.dump(2) + "\n";
}

SceneSpec scene_spec_from_json(std::string_view text, std::uint64_t* seed) {
  const json doc = parse_doc(text, "scene spec");
  return guarded("scene spec", [&] {
    const json& j = doc.contains("schema") ? doc.at("spec") : doc;
    if (doc.contains("schema")) {
      expect_schema(doc, kSceneSchema);
      if (seed) *seed = doc.at("seed").get<std::uint64_t>();
    }
    SceneSpec s;
    if (j.contains("bounds")) {
      s.bounds = {j["bounds"].at(0).get<int>(), j["bounds"].at(1).get<int>(), j["bounds"].at(2).get<int>()};
    }
    s.cell_size = j.value("cell_size", s.cell_size);
    s.n_objects = j.value("n_objects", s.n_objects);
    s.rooms_x = j.value("rooms_x", s.rooms_x);
    s.rooms_y = j.value("rooms_y", s.rooms_y);
    s.door_width = j.value("door_width", s.door_width);
    s.object_gap = j.value("object_gap", s.object_gap);
    s.max_attempts_per_object = j.value("max_attempts_per_object", s.max_attempts_per_object);
    return s;
  });
}

std::string annotations_jsonl(const Scene& scene) {
  std::string out;
  for (const auto& o : scene.objects()) {
    json j = {{"object_id", o.id}, {"gt_caption", o.gt_caption}, {"category", std::string(category_name(o.category))}};
    out += j.dump() + "\n";
  }
  return out;
}

std::vector<Annotation> parse_annotations(std::string_view text) {
  std::vector<Annotation> out;
  for (auto line : split_lines(text)) {
    const json j = parse_doc(line, "annotation line");
    out.push_back(guarded("annotation line", [&] {
      return Annotation{j.at("object_id").get<int>(), j.at("gt_caption").get<std::string>(),
                        j.at("category").get<std::string>()};
    }));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Episodes
// ---------------------------------------------------------------------------

std::string episode_to_jsonl(const EpisodeLog& log) {
  json head = {{"schema", kEpisodeSchema},
               {"policy", log.policy},
               {"seed", log.seed},
               {"n_steps", log.n_steps},
               {"scene_seed", log.scene_seed},
               {"camera", camera_json(log.camera)},
               {"map_resolution", log.map_resolution},
               {"start", agent_json(log.start)},
               {"completed_early", log.completed_early},
               {"records", log.records.size()}};
  std::string out = head.dump() + "\n";
  for (const auto& r : log.records) {
    json dets = json::array();
    for (const auto& ld : r.detections) {
      dets.push_back({{"view_id", ld.det.view_id},
                      {"object_id_gt", ld.det.object_id_gt},
                      {"logits", ld.det.logits},
                      {"bbox", bbox_json(ld.det.bbox)},
                      {"confidence", ld.det.confidence},
                      {"visible_fraction", ld.det.visible_fraction},
                      {"pixels", ld.pixels},
                      {"depths", ld.depths}});
    }
    json caps = json::array();
    for (const auto& c : r.captions) caps.push_back(caption_json(c));
    json j = {{"step", r.step},
              {"action", r.action},
              {"action_value", r.action_value},
              {"agent", agent_json(r.agent)},
              {"camera_pose", pose_json(r.camera_pose)},
              {"hit_pixels", r.hit_pixels},
              {"seen_columns", r.seen_columns},
              {"detections", dets},
              {"captions", caps}};
    j["goal_event"] = r.goal_event ? json{{"goal", {r.goal_event->goal.row, r.goal_event->goal.col}},
                                          {"reason", r.goal_event->reason}}
                                   : json(nullptr);
    out += j.dump() + "\n";
  }
  return out;
}

EpisodeLog episode_from_jsonl(std::string_view text) {
  const auto lines = split_lines(text);
  if (lines.empty()) throw ParseError("episode file is empty");
  const json head = parse_doc(lines.front(), "episode header");
  expect_schema(head, kEpisodeSchema);
  return guarded("episode", [&] {
    EpisodeLog log;
    log.policy = head.at("policy").get<std::string>();
    log.seed = head.at("seed").get<std::uint64_t>();
    log.n_steps = head.at("n_steps").get<int>();
    log.scene_seed = head.at("scene_seed").get<std::uint64_t>();
    log.camera = camera_from(head.at("camera"));
    log.map_resolution = head.at("map_resolution").get<double>();
    log.start = agent_from(head.at("start"));
    log.completed_early = head.at("completed_early").get<bool>();
    const auto expected = head.at("records").get<std::size_t>();
    for (std::size_t i = 1; i < lines.size(); ++i) {
      const json j = parse_doc(lines[i], "episode step");
      StepRecord r;
      r.step = j.at("step").get<int>();
      r.action = j.at("action").get<std::string>();
      r.action_value = j.at("action_value").get<double>();
      r.agent = agent_from(j.at("agent"));
      r.camera_pose = pose_from(j.at("camera_pose"));
      r.hit_pixels = j.at("hit_pixels").get<int>();
      r.seen_columns = j.at("seen_columns").get<int>();
      if (!j.at("goal_event").is_null()) {
        const auto& g = j.at("goal_event");
        r.goal_event = GoalEvent{{g.at("goal").at(0).get<int>(), g.at("goal").at(1).get<int>()},
                                 g.at("reason").get<std::string>()};
      }
      for (const auto& d : j.at("detections")) {
        LoggedDetection ld;
        ld.det.view_id = d.at("view_id").get<std::uint64_t>();
        ld.det.object_id_gt = d.at("object_id_gt").get<int>();
        ld.det.logits = d.at("logits").get<std::vector<double>>();
        ld.det.bbox = bbox_from(d.at("bbox"));
        ld.det.confidence = d.at("confidence").get<double>();
        ld.det.visible_fraction = d.at("visible_fraction").get<double>();
        ld.pixels = d.at("pixels").get<std::vector<int>>();
        ld.depths = d.at("depths").get<std::vector<double>>();
        if (ld.pixels.size() != ld.depths.size()) throw ParseError("detection pixels and depths misaligned");
        r.detections.push_back(std::move(ld));
      }
      for (const auto& c : j.at("captions")) r.captions.push_back(caption_from(c));
      if (r.captions.size() != r.detections.size()) throw ParseError("captions and detections misaligned");
      log.records.push_back(std::move(r));
    }
    if (log.records.size() != expected) throw ParseError("episode is truncated");
    return log;
  });
}

// ---------------------------------------------------------------------------
// Maps
// ---------------------------------------------------------------------------

std::string map_to_json(const SemanticVoxelMap& map, const std::vector<ObjectInstance>& instances) {
  json cells = json::array();
  for (const auto& [k, c] : map.cells()) {
    cells.push_back({{"key", key_json(k)},
                     {"logit_sum", c.logit_sum},
                     {"hit_count", c.hit_count},
                     {"caption_refs", c.caption_refs}});
  }
  json inst = json::array();
  for (const auto& i : instances) {
    json vox = json::array();
    for (const auto& k : i.voxels) vox.push_back(key_json(k));
    inst.push_back({{"instance_id", i.instance_id},
                    {"pseudo_label", i.pseudo_label},
                    {"voxels", vox},
                    {"captions", i.captions}});
  }
  json j = {{"schema", kMapSchema},
            {"resolution", map.resolution()},
            {"num_classes", map.num_classes()},
            {"cells", cells},
            {"instances", inst}};
  return j.dump() + "\n";
}

MapFile map_from_json(std::string_view text) {
  const json j = parse_doc(text, "map");
  expect_schema(j, kMapSchema);
  return guarded("map", [&] {
    MapFile f{SemanticVoxelMap(j.at("resolution").get<double>(), j.at("num_classes").get<int>()), {}};
    for (const auto& c : j.at("cells")) {
      VoxelCell cell;
      cell.logit_sum = c.at("logit_sum").get<std::vector<double>>();
      cell.hit_count = c.at("hit_count").get<int>();
      cell.caption_refs = c.at("caption_refs").get<std::vector<std::uint64_t>>();
      if (static_cast<int>(cell.logit_sum.size()) != f.map.num_classes()) {
        throw ParseError("voxel logits do not match the class count");
      }
      f.map.put(key_from(c.at("key")), std::move(cell));
    }
    for (const auto& i : j.at("instances")) {
      ObjectInstance inst;
      inst.instance_id = i.at("instance_id").get<int>();
      inst.pseudo_label = i.at("pseudo_label").get<int>();
      for (const auto& k : i.at("voxels")) inst.voxels.push_back(key_from(k));
      inst.captions = i.at("captions").get<std::vector<std::uint64_t>>();
      f.instances.push_back(std::move(inst));
    }
    return f;
  });
}

// ---------------------------------------------------------------------------
// Pseudo-captions
// ---------------------------------------------------------------------------

std::string pseudo_to_jsonl(const PseudoFile& f) {
  json head = {{"schema", kPseudoSchema},
               {"method", f.method},
               {"policy", f.policy},
               {"seed", f.seed},
               {"records", f.records.size()},
               {"skipped", f.skipped}};
  std::string out = head.dump() + "\n";
  for (const auto& r : f.records) {
    const auto& pc = r.caption;
    json views = json::array();
    for (const auto& v : r.views) {
      views.push_back({{"label", v.label}, {"appearance", v.appearance}, {"visible_fraction", v.visible_fraction}});
    }
    json j = {{"instance_id", pc.instance_id},
              {"object_id", pc.object_id},
              {"pseudo_label", r.pseudo_label},
              {"text", pc.text},
              {"method", pc.method},
              {"source_model", pc.source_model},
              {"fallback", pc.fallback},
              {"truncated", pc.truncated},
              {"raw_reply", pc.raw_reply},
              {"caption_ids", pc.caption_ids},
              {"views", views}};
    out += j.dump() + "\n";
  }
  return out;
}

PseudoFile pseudo_from_jsonl(std::string_view text) {
  const auto lines = split_lines(text);
  if (lines.empty()) throw ParseError("pseudo-caption file is empty");
  const json head = parse_doc(lines.front(), "pseudo-caption header");
  expect_schema(head, kPseudoSchema);
  return guarded("pseudo-captions", [&] {
    PseudoFile f;
    f.method = head.at("method").get<std::string>();
    f.policy = head.at("policy").get<std::string>();
    f.seed = head.at("seed").get<std::uint64_t>();
    f.skipped = head.at("skipped").get<std::vector<std::string>>();
    for (std::size_t i = 1; i < lines.size(); ++i) {
      const json j = parse_doc(lines[i], "pseudo-caption line");
      PseudoRecord r;
      auto& pc = r.caption;
      pc.instance_id = j.at("instance_id").get<int>();
      pc.object_id = j.at("object_id").get<int>();
      r.pseudo_label = j.at("pseudo_label").get<int>();
      pc.text = j.at("text").get<std::string>();
      pc.method = j.at("method").get<std::string>();
      pc.source_model = j.at("source_model").get<std::string>();
      pc.fallback = j.at("fallback").get<bool>();
      pc.truncated = j.at("truncated").get<bool>();
      pc.raw_reply = j.at("raw_reply").get<std::string>();
      pc.caption_ids = j.at("caption_ids").get<std::vector<std::uint64_t>>();
      for (const auto& v : j.at("views")) {
        r.views.push_back({pc.instance_id, v.at("label").get<int>(), v.at("appearance").get<std::string>(),
                           v.at("visible_fraction").get<double>()});
      }
      f.records.push_back(std::move(r));
    }
    if (f.records.size() != head.at("records").get<std::size_t>()) throw ParseError("pseudo-caption file is truncated");
    return f;
  });
}

// ---------------------------------------------------------------------------
// Models
// ---------------------------------------------------------------------------

std::string model_to_json(const ToyCaptioner& m) {
  json j = {{"schema", kModelSchema},
            {"features", m.features()},
            {"length", m.length()},
            {"descriptor_dim", kDescriptorDim},
            {"vocab", m.vocab().words()},
            {"params", m.params()}};
  return j.dump() + "\n";
}

ToyCaptioner model_from_json(std::string_view text) {
  const json j = parse_doc(text, "model");
  expect_schema(j, kModelSchema);
  return guarded("model", [&] {
    if (j.at("descriptor_dim").get<int>() != kDescriptorDim) throw ParseError("model descriptor size differs");
    Rng unused(0);
    ToyCaptioner m(Vocabulary(j.at("vocab").get<std::vector<std::string>>()), j.at("features").get<int>(),
                   j.at("length").get<int>(), unused, 0.0);
    try {
      m.set_params(j.at("params").get<std::vector<double>>());
    } catch (const ContractError& e) {
      throw ParseError(std::string("model parameters: ") + e.what());
    }
    return m;
  });
}

// ---------------------------------------------------------------------------
// Reports
// ---------------------------------------------------------------------------

std::string consistency_to_json(const ConsistencyPair& c) {
  json j = {{"schema", kConsistencySchema}, {"pre", consistency_json(c.pre)}, {"post", consistency_json(c.post)}};
  return j.dump(2) + "\n";
}

ConsistencyPair consistency_from_json(std::string_view text) {
  const json j = parse_doc(text, "consistency");
  expect_schema(j, kConsistencySchema);
  return guarded("consistency", [&] {
    return ConsistencyPair{consistency_from(j.at("pre")), consistency_from(j.at("post"))};
  });
}

std::string consistency_csv(const ConsistencyReport& c) {
  std::ostringstream os;
  os.precision(17);
  os << "instance_id,score\n";
  for (std::size_t i = 0; i < c.scores.size(); ++i) os << c.instance_ids[i] << "," << c.scores[i] << "\n";
  return os.str();
}

std::string training_to_json(const TrainingLog& t) {
  json j = {{"schema", kTrainingSchema}, {"finetune", finetune_json(t.finetune)}, {"ablation", ablation_json(t.ablation)}};
  return j.dump(2) + "\n";
}

TrainingLog training_from_json(std::string_view text) {
  const json j = parse_doc(text, "training log");
  expect_schema(j, kTrainingSchema);
  return guarded("training log", [&] {
    return TrainingLog{finetune_from(j.at("finetune")), ablation_from(j.at("ablation"))};
  });
}

std::string report_to_json(const RunReport& r) {
  json j = {{"schema", kReportSchema},
            {"seed", r.seed},
            {"policy", r.policy},
            {"method", r.method},
            {"captioner", r.captioner},
            {"notes", r.notes}};
  j["metrics"] = opt_metrics(r.metrics);
  j["captioner_before"] = opt_metrics(r.captioner_before);
  j["captioner_after"] = opt_metrics(r.captioner_after);
  j["consistency_pre"] = r.consistency_pre ? consistency_json(*r.consistency_pre) : json(nullptr);
  j["consistency_post"] = r.consistency_post ? consistency_json(*r.consistency_post) : json(nullptr);
  j["finetune"] = r.finetune ? finetune_json(*r.finetune) : json(nullptr);
  j["ablation"] = ablation_json(r.ablation);
  return j.dump(2) + "\n";
}

RunReport report_from_json(std::string_view text) {
  const json j = parse_doc(text, "report");
  expect_schema(j, kReportSchema);
  return guarded("report", [&] {
    RunReport r;
    r.seed = j.at("seed").get<std::uint64_t>();
    r.policy = j.at("policy").get<std::string>();
    r.method = j.at("method").get<std::string>();
    r.captioner = j.at("captioner").get<std::string>();
    r.notes = j.at("notes").get<std::vector<std::string>>();
    r.metrics = opt_metrics_from(j.at("metrics"));
    r.captioner_before = opt_metrics_from(j.at("captioner_before"));
    r.captioner_after = opt_metrics_from(j.at("captioner_after"));
    if (!j.at("consistency_pre").is_null()) r.consistency_pre = consistency_from(j.at("consistency_pre"));
    if (!j.at("consistency_post").is_null()) r.consistency_post = consistency_from(j.at("consistency_post"));
    if (!j.at("finetune").is_null()) r.finetune = finetune_from(j.at("finetune"));
    r.ablation = ablation_from(j.at("ablation"));
    return r;
  });
}

// ---------------------------------------------------------------------------
// Manifests
// ---------------------------------------------------------------------------

std::string manifest_to_json(const Manifest& m) {
  json entries = json::array();
  for (const auto& e : m.entries) {
    entries.push_back({{"phase", e.phase}, {"path", e.path}, {"sha256", e.sha256}, {"schema", e.schema}});
  }
  json phases = json::array();
  for (const auto& p : m.phases) phases.push_back(phase_json(p));
  json j = {{"schema", kManifestSchema},
            {"config_hash", m.config_hash},
            {"seed", m.seed},
            {"versions", m.versions},
            {"entries", entries},
            {"phases", phases},
            {"deviations", m.deviations},
            {"timestamps", m.timestamps}};
  j["failure"] = m.failure ? phase_json(*m.failure) : json(nullptr);
  return j.dump(2) + "\n";
}

Manifest manifest_from_json(std::string_view text) {
  const json j = parse_doc(text, "manifest");
  expect_schema(j, kManifestSchema);
  return guarded("manifest", [&] {
    Manifest m;
    m.config_hash = j.at("config_hash").get<std::string>();
    m.seed = j.at("seed").get<std::uint64_t>();
    m.versions = j.at("versions").get<std::map<std::string, std::string>>();
    for (const auto& e : j.at("entries")) {
      m.entries.push_back({e.at("phase").get<std::string>(), e.at("path").get<std::string>(),
                           e.at("sha256").get<std::string>(), e.at("schema").get<std::string>()});
    }
    for (const auto& p : j.at("phases")) m.phases.push_back(phase_from(p));
    m.deviations = j.at("deviations").get<std::vector<std::string>>();
    m.timestamps = j.at("timestamps").get<std::map<std::string, std::string>>();
    if (!j.at("failure").is_null()) m.failure = phase_from(j.at("failure"));
    return m;
  });
}

}  // namespace embcap::io
