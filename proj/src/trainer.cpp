#include "embcap/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>
#include <unordered_map>

#include "embcap/lexicon.hpp"

namespace embcap {

// ---------------------------------------------------------------------------
// Vocabulary
// ---------------------------------------------------------------------------

Vocabulary::Vocabulary() : Vocabulary([] {
  std::vector<std::string> w{"<pad>", "<eos>", "<unk>"};
  for (auto& s : lexicon::all_words()) w.push_back(std::move(s));
  return w;
}()) {}

Vocabulary::Vocabulary(std::vector<std::string> words) : words_(std::move(words)) {
  if (words_.size() < 3 || words_[kPad] != "<pad>" || words_[kEos] != "<eos>" || words_[kUnk] != "<unk>") {
    throw ContractError("vocabulary must start with <pad>, <eos>, <unk>");
  }
  for (std::size_t i = 0; i < words_.size(); ++i) {
    if (!index_.emplace(words_[i], static_cast<int>(i)).second) {
      throw ContractError("duplicate vocabulary word: " + words_[i]);
    }
  }
}

int Vocabulary::id(std::string_view word) const {
  auto it = index_.find(word);
  return it == index_.end() ? kUnk : it->second;
}

const std::string& Vocabulary::word(int id) const {
  if (id < 0 || id >= size()) throw ContractError("token id out of range");
  return words_[id];
}

std::vector<int> Vocabulary::encode(std::string_view caption, int length) const {
  if (length < 1) throw ContractError("target length must be positive");
  std::vector<int> out;
  for (const auto& t : tokenize(caption)) {
    if (static_cast<int>(out.size()) == length) break;
    out.push_back(id(t));
  }
  if (static_cast<int>(out.size()) < length) out.push_back(kEos);
  out.resize(length, kPad);
  return out;
}

std::string Vocabulary::decode(std::span<const int> ids) const {
  std::vector<std::string> words;
  for (int i : ids) {
    if (i == kEos) break;
    if (i == kPad || i == kUnk) continue;
    words.push_back(word(i));
  }
  return join(words, " ");
}

// ---------------------------------------------------------------------------
// Model
// ---------------------------------------------------------------------------

std::vector<double> view_descriptor(const View& v) {
  std::vector<double> d(kDescriptorDim, 0.0);
  if (v.label >= 0 && v.label < kNumClasses) d[v.label] = 1.0;
  double norm = 0.0;
  for (const auto& t : tokenize(v.appearance)) {
    d[kNumClasses + fnv1a64(t) % kAppearanceBuckets] += 1.0;
  }
  for (int i = 0; i < kAppearanceBuckets; ++i) norm += d[kNumClasses + i] * d[kNumClasses + i];
  if (norm > 0.0) {
    norm = std::sqrt(norm);
    for (int i = 0; i < kAppearanceBuckets; ++i) d[kNumClasses + i] /= norm;
  }
  d[kDescriptorDim - 1] = v.visible_fraction;
  return d;
}

ToyCaptioner::ToyCaptioner(Vocabulary vocab, int features, int length, Rng& rng, double init_scale)
    : vocab_(std::move(vocab)), features_(features), length_(length) {
  if (features < 1 || length < 1) throw ContractError("model dimensions must be positive");
  params_.assign(c_offset() + static_cast<std::size_t>(length_) * classes(), 0.0);
  for (std::size_t i = w_offset(); i < b_offset(); ++i) params_[i] = init_scale * rng.normal();
  for (std::size_t i = u_offset(); i < c_offset(); ++i) params_[i] = init_scale * rng.normal();
}

void ToyCaptioner::set_params(std::vector<double> p) {
  if (p.size() != params_.size()) throw ContractError("parameter vector has the wrong size");
  for (double v : p) {
    if (!std::isfinite(v)) throw ContractError("non-finite parameter");
  }
  params_ = std::move(p);
}

std::vector<double> ToyCaptioner::encode(std::span<const double> d) const {
  if (static_cast<int>(d.size()) != kDescriptorDim) throw ContractError("descriptor has the wrong size");
  std::vector<double> x(features_);
  for (int f = 0; f < features_; ++f) {
    const double* w = &params_[w_offset() + static_cast<std::size_t>(f) * kDescriptorDim];
    double s = params_[b_offset() + f];
    for (int k = 0; k < kDescriptorDim; ++k) s += w[k] * d[k];
    x[f] = s;
  }
  return x;
}

std::vector<double> ToyCaptioner::decode_probs(std::span<const double> x) const {
  if (static_cast<int>(x.size()) != features_) throw ContractError("feature vector has the wrong size");
  const int C = classes();
  std::vector<double> p(static_cast<std::size_t>(length_) * C);
  for (int t = 0; t < length_; ++t) {
    double* row = &p[static_cast<std::size_t>(t) * C];
    for (int c = 0; c < C; ++c) {
      const std::size_t tc = static_cast<std::size_t>(t) * C + c;
      const double* u = &params_[u_offset() + tc * features_];
      double s = params_[c_offset() + tc];
      for (int f = 0; f < features_; ++f) s += u[f] * x[f];
      row[c] = s;
    }
    const double mx = *std::max_element(row, row + C);
    double z = 0.0;
    for (int c = 0; c < C; ++c) z += (row[c] = std::exp(row[c] - mx));
    for (int c = 0; c < C; ++c) row[c] /= z;
  }
  return p;
}

std::string ToyCaptioner::generate(const View& v) const {
  const auto d = view_descriptor(v);
  const auto p = decode_probs(encode(d));
  const int C = classes();
  std::vector<int> ids(length_);
  for (int t = 0; t < length_; ++t) {
    const double* row = &p[static_cast<std::size_t>(t) * C];
    ids[t] = static_cast<int>(std::max_element(row, row + C) - row);
  }
  return vocab_.decode(ids);
}

// ---------------------------------------------------------------------------
// Losses
// ---------------------------------------------------------------------------

double caption_loss(std::span<const double> probs, std::span<const int> target, int classes) {
  if (classes < 1 || probs.size() != target.size() * static_cast<std::size_t>(classes)) {
    throw ContractError("caption_loss: probabilities and target disagree in shape");
  }
  double loss = 0.0;
  for (std::size_t t = 0; t < target.size(); ++t) {
    const int y = target[t];
    if (y < 0 || y >= classes) throw ContractError("caption_loss: target id out of range");
    if (y == Vocabulary::kPad) continue;
    loss -= std::log(std::max(probs[t * classes + y], kProbFloor));
  }
  return loss;
}

double euclidean(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw ContractError("feature vectors differ in dimension");
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
  return std::sqrt(s);
}

double triplet_loss(std::span<const double> a, std::span<const double> p, std::span<const double> n,
                    double margin) {
  return std::max(euclidean(a, p) - euclidean(a, n) + margin, 0.0);
}

double combined_loss(double cap, double tr, double lambda_tr) { return cap + lambda_tr * tr; }

// ---------------------------------------------------------------------------
// Triplets
// ---------------------------------------------------------------------------

TripletBatch sample_triplets(std::span<const std::size_t> batch, std::span<const std::size_t> pool,
                             std::span<const int> instance_of, Rng& rng) {
  TripletBatch out;
  std::map<int, std::vector<std::size_t>> by_instance;
  for (auto i : pool) {
    if (i >= instance_of.size()) throw ContractError("pool index outside the instance index");
    by_instance[instance_of[i]].push_back(i);
  }
  if (by_instance.size() < 2) {
    out.no_negatives = true;
    return out;
  }
  for (auto a : batch) {
    if (a >= instance_of.size()) throw ContractError("batch index outside the instance index");
    const int inst = instance_of[a];
    auto it = by_instance.find(inst);
    std::vector<std::size_t> positives;
    if (it != by_instance.end()) {
      for (auto v : it->second) {
        if (v != a) positives.push_back(v);
      }
    }
    if (positives.empty()) {
      ++out.skipped_single_view;
      continue;
    }
    // Draw the k-th pool entry that belongs to another instance.
    std::size_t k = rng.uniform_index(pool.size() - it->second.size());
    std::size_t neg = 0;
    for (auto v : pool) {
      if (instance_of[v] == inst) continue;
      if (k-- == 0) {
        neg = v;
        break;
      }
    }
    out.anchors.push_back(a);
    out.positives.push_back(positives[rng.uniform_index(positives.size())]);
    out.negatives.push_back(neg);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Batch loss
// ---------------------------------------------------------------------------

LossParts batch_loss(const ToyCaptioner& model, std::span<const Example> examples,
                     std::span<const std::size_t> batch, const TripletBatch& triplets,
                     const LossConfig& cfg, std::vector<double>* grad) {
  const int F = model.features(), C = model.classes(), T = model.length();
  const auto& P = model.params();
  if (grad) grad->assign(P.size(), 0.0);

  struct Cached {
    std::vector<double> d, x, dx;
  };
  std::unordered_map<std::size_t, Cached> cache;
  auto features_of = [&](std::size_t i) -> Cached& {
    auto it = cache.find(i);
    if (it != cache.end()) return it->second;
    if (i >= examples.size()) throw ContractError("batch index out of range");
    Cached c;
    c.d = view_descriptor(examples[i].view);
    c.x = model.encode(c.d);
    c.dx.assign(F, 0.0);
    return cache.emplace(i, std::move(c)).first->second;
  };

  LossParts out;
  for (auto i : batch) {
    Cached& c = features_of(i);
    const auto& target = examples[i].target;
    if (static_cast<int>(target.size()) != T) throw ContractError("target length differs from the model's");
    auto p = model.decode_probs(c.x);
    out.caption += caption_loss(p, target, C);
    if (!grad) continue;
    for (int t = 0; t < T; ++t) {
      const int y = target[t];
      if (y == Vocabulary::kPad) continue;
      double* row = &p[static_cast<std::size_t>(t) * C];
      if (row[y] < kProbFloor) continue;  // clamped: flat in the logits
      row[y] -= 1.0;
      for (int k = 0; k < C; ++k) {
        const double g = row[k];
        const std::size_t tc = static_cast<std::size_t>(t) * C + k;
        (*grad)[model.c_offset() + tc] += g;
        double* gu = &(*grad)[model.u_offset() + tc * F];
        const double* u = &P[model.u_offset() + tc * F];
        for (int f = 0; f < F; ++f) {
          gu[f] += g * c.x[f];
          c.dx[f] += g * u[f];
        }
      }
    }
  }

  for (std::size_t k = 0; k < triplets.size(); ++k) {
    Cached& a = features_of(triplets.anchors[k]);
    Cached& p = features_of(triplets.positives[k]);
    Cached& n = features_of(triplets.negatives[k]);
    const double dap = euclidean(a.x, p.x), dan = euclidean(a.x, n.x);
    const double m = dap - dan + cfg.margin;
    if (m <= 0.0) continue;
    out.triplet += m;
    if (!grad || cfg.lambda_tr == 0.0) continue;
    for (int f = 0; f < F; ++f) {
      const double gp = dap > 0.0 ? cfg.lambda_tr * (a.x[f] - p.x[f]) / dap : 0.0;
      const double gn = dan > 0.0 ? cfg.lambda_tr * (a.x[f] - n.x[f]) / dan : 0.0;
      a.dx[f] += gp - gn;
      p.dx[f] -= gp;
      n.dx[f] += gn;
    }
  }
  out.total = combined_loss(out.caption, out.triplet, cfg.lambda_tr);

  if (grad) {
    for (auto& [i, c] : cache) {
      for (int f = 0; f < F; ++f) {
        const double g = c.dx[f];
        if (g == 0.0) continue;
        (*grad)[model.b_offset() + f] += g;
        double* gw = &(*grad)[model.w_offset() + static_cast<std::size_t>(f) * kDescriptorDim];
        for (int d = 0; d < kDescriptorDim; ++d) gw[d] += g * c.d[d];
      }
    }
  }
  return out;
}

GradCheckResult grad_check(const ToyCaptioner& model, std::span<const Example> examples,
                           std::span<const std::size_t> batch, const TripletBatch& triplets,
                           const LossConfig& cfg, Rng& rng, std::size_t n_params, double abs_floor) {
  GradCheckResult res;
  if (batch.empty()) {
    res.skip_reason = "empty batch";
    return res;
  }
  if (cfg.lambda_tr != 0.0) {
    for (std::size_t k = 0; k < triplets.size(); ++k) {
      const auto xa = model.encode(view_descriptor(examples[triplets.anchors[k]].view));
      const auto xp = model.encode(view_descriptor(examples[triplets.positives[k]].view));
      const auto xn = model.encode(view_descriptor(examples[triplets.negatives[k]].view));
      const double dap = euclidean(xa, xp), dan = euclidean(xa, xn);
      if (dap < 1e-8 || dan < 1e-8) {
        res.skip_reason = "triplet " + std::to_string(k) + " has a zero distance";
        return res;
      }
      if (std::abs(dap - dan + cfg.margin) <= kKinkTolerance) {
        res.skip_reason = "triplet " + std::to_string(k) + " sits at the hinge kink";
        return res;
      }
    }
  }
  std::vector<double> analytic;
  batch_loss(model, examples, batch, triplets, cfg, &analytic);
  ToyCaptioner probe = model;
  double worst = 0.0;
  for (std::size_t s = 0; s < n_params; ++s) {
    const std::size_t j = rng.uniform_index(analytic.size());
    const double keep = probe.params()[j];
    probe.params()[j] = keep + kGradCheckStep;
    const double up = batch_loss(probe, examples, batch, triplets, cfg, nullptr).total;
    probe.params()[j] = keep - kGradCheckStep;
    const double down = batch_loss(probe, examples, batch, triplets, cfg, nullptr).total;
    probe.params()[j] = keep;
    const double numeric = (up - down) / (2.0 * kGradCheckStep);
    const double a = analytic[j];
    const double rel = std::abs(a - numeric) / std::max({std::abs(a), std::abs(numeric), abs_floor});
    worst = std::max(worst, rel);
    ++res.checked;
  }
  res.max_rel_error = worst;
  return res;
}

// ---------------------------------------------------------------------------
// Training
// ---------------------------------------------------------------------------

bool EarlyStopper::update(int epoch, double val_loss) {
  improved_ = best_epoch_ < 0 || val_loss < best_;
  if (improved_) {
    best_ = val_loss;
    best_epoch_ = epoch;
    bad_ = 0;
  } else {
    ++bad_;
  }
  return bad_ >= patience_;
}

void split_by_instance(std::span<const Example> examples, double val_fraction, Rng& rng,
                       std::vector<std::size_t>& train, std::vector<std::size_t>& val) {
  train.clear();
  val.clear();
  std::vector<int> ids;
  for (const auto& e : examples) ids.push_back(e.view.instance_id);
  std::sort(ids.begin(), ids.end());
  ids.erase(std::unique(ids.begin(), ids.end()), ids.end());
  for (std::size_t i = ids.size(); i > 1; --i) std::swap(ids[i - 1], ids[rng.uniform_index(i)]);
  std::size_t n_val = 0;
  if (ids.size() >= 2) {
    n_val = std::clamp<std::size_t>(static_cast<std::size_t>(std::ceil(val_fraction * ids.size())), 1,
                                    ids.size() - 1);
  }
  std::vector<int> held(ids.begin(), ids.begin() + n_val);
  std::sort(held.begin(), held.end());
  for (std::size_t i = 0; i < examples.size(); ++i) {
    const bool is_val = std::binary_search(held.begin(), held.end(), examples[i].view.instance_id);
    (is_val ? val : train).push_back(i);
  }
}

namespace {

std::vector<int> instance_index(std::span<const Example> examples) {
  std::vector<int> out;
  out.reserve(examples.size());
  for (const auto& e : examples) out.push_back(e.view.instance_id);
  return out;
}

// Per-example loss over a whole split with a fixed triplet draw, so epochs
// are compared on the same triplets.
double split_loss(const ToyCaptioner& model, std::span<const Example> examples,
                  std::span<const std::size_t> idx, std::span<const int> inst, const LossConfig& cfg,
                  std::uint64_t seed) {
  if (idx.empty()) return 0.0;
  Rng rng(seed);
  const TripletBatch tb = sample_triplets(idx, idx, inst, rng);
  return batch_loss(model, examples, idx, tb, cfg, nullptr).total / static_cast<double>(idx.size());
}

}  // namespace

TrainResult finetune(const ToyCaptioner& model, std::span<const Example> examples,
                     const LossConfig& cfg, std::uint64_t seed) {
  if (examples.empty()) throw ContractError("finetune: empty dataset");
  if (cfg.margin <= 0.0) throw ContractError("triplet margin must be positive");
  if (cfg.lambda_tr < 0.0) throw ContractError("lambda_tr must be non-negative");
  if (cfg.batch_size < 1) throw ContractError("batch size must be positive");

  Rng rng(seed);
  Rng split_rng = rng.split(1), order_rng = rng.split(2), triplet_rng = rng.split(3);
  const std::uint64_t eval_seed = rng.split(4).next_u64();
  std::vector<std::size_t> train, val;
  split_by_instance(examples, cfg.val_fraction, split_rng, train, val);
  const auto inst = instance_index(examples);

  TrainResult res;
  res.model = model;
  ToyCaptioner current = model;
  auto evaluate = [&](int epoch) {
    EpochRecord r;
    r.epoch = epoch;
    r.train_loss = split_loss(current, examples, train, inst, cfg, eval_seed);
    r.val_loss = val.empty() ? r.train_loss : split_loss(current, examples, val, inst, cfg, eval_seed);
    res.history.push_back(r);
    return r.val_loss;
  };

  EarlyStopper stopper(cfg.patience);
  stopper.update(0, evaluate(0));
  std::vector<double> grad;
  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    std::vector<std::size_t> order = train;
    for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[order_rng.uniform_index(i)]);
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::span<const std::size_t> batch(order.data() + start,
                                               std::min<std::size_t>(cfg.batch_size, order.size() - start));
      const TripletBatch tb = sample_triplets(batch, train, inst, triplet_rng);
      res.skipped_single_view += tb.skipped_single_view;
      batch_loss(current, examples, batch, tb, cfg, &grad);
      auto& p = current.params();
      for (std::size_t j = 0; j < p.size(); ++j) {
        p[j] -= cfg.learning_rate * (grad[j] + cfg.weight_decay * p[j]);
      }
    }
    const bool stop = stopper.update(epoch, evaluate(epoch));
    if (stopper.improved()) res.model = current;
    if (stop) {
      res.stopped_early = epoch < cfg.epochs;
      break;
    }
  }
  res.best_epoch = stopper.best_epoch();
  return res;
}

// ---------------------------------------------------------------------------
// Consistency
// ---------------------------------------------------------------------------

Quartiles quartiles(std::vector<double> v) {
  if (v.empty()) throw ContractError("quartiles of an empty sample");
  std::sort(v.begin(), v.end());
  auto q = [&](double p) {
    const double h = (v.size() - 1) * p;
    const auto lo = static_cast<std::size_t>(std::floor(h));
    const auto hi = std::min(lo + 1, v.size() - 1);
    return v[lo] + (h - lo) * (v[hi] - v[lo]);
  };
  return {v.front(), q(0.25), q(0.5), q(0.75), v.back()};
}

ConsistencyReport consistency_score(const ToyCaptioner& model, std::span<const View> views,
                                    const Embedder& embedder) {
  std::map<int, std::vector<const View*>> by_instance;
  for (const auto& v : views) by_instance[v.instance_id].push_back(&v);
  ConsistencyReport rep;
  for (const auto& [id, vs] : by_instance) {
    if (vs.size() < 2) continue;
    std::vector<std::string> texts;
    std::vector<Embedding> embs;
    for (const View* v : vs) {
      texts.push_back(model.generate(*v));
      embs.push_back(embedder.embed(texts.back()));
    }
    double sum = 0.0;
    std::size_t pairs = 0;
    for (std::size_t i = 0; i < texts.size(); ++i) {
      for (std::size_t j = i + 1; j < texts.size(); ++j) {
        sum += (texts[i] == texts[j] && !embs[i].is_zero()) ? 1.0 : cosine(embs[i], embs[j]);
        ++pairs;
      }
    }
    rep.instance_ids.push_back(id);
    rep.scores.push_back(sum / pairs);
  }
  if (!rep.scores.empty()) rep.summary = quartiles(rep.scores);
  return rep;
}

// ---------------------------------------------------------------------------
// Data assembly and ablation
// ---------------------------------------------------------------------------

std::vector<Example> raw_caption_examples(std::span<const View> views, const Vocabulary& vocab,
                                          int length) {
  std::vector<Example> out;
  for (const auto& v : views) out.push_back({v, vocab.encode(v.appearance, length)});
  return out;
}

std::vector<Example> pseudo_caption_examples(std::span<const View> views,
                                             const std::map<int, std::string>& pseudo,
                                             const Vocabulary& vocab, int length) {
  std::vector<Example> out;
  for (const auto& v : views) {
    auto it = pseudo.find(v.instance_id);
    if (it != pseudo.end()) out.push_back({v, vocab.encode(it->second, length)});
  }
  return out;
}

std::vector<View> simulate_views(std::span<const ObjectGT> objects, int views_per_object,
                                 Captioner& captioner, Rng& rng, double min_visible) {
  std::vector<View> out;
  for (const auto& obj : objects) {
    for (int k = 0; k < views_per_object; ++k) {
      const double vf = min_visible + (1.0 - min_visible) * rng.uniform();
      const CaptionRecord rec = captioner.describe(obj, vf, rng);
      out.push_back({obj.id, static_cast<int>(obj.category), rec.text, vf});
    }
  }
  return out;
}

LossConfig pretrain_config() {
  LossConfig c;
  c.lambda_tr = 0.0;
  c.learning_rate = 1e-2;
  c.epochs = 60;
  c.patience = 5;
  return c;
}

std::vector<double> ablation_lambdas() { return {1.0, 0.5, 0.1}; }

std::vector<AblationRow> lambda_ablation(const ToyCaptioner& base, std::span<const Example> examples,
                                         std::span<const View> eval_views, const Embedder& embedder,
                                         const LossConfig& cfg, std::span<const double> lambdas,
                                         std::uint64_t seed) {
  std::vector<AblationRow> rows;
  for (double lambda : lambdas) {
    LossConfig c = cfg;
    c.lambda_tr = lambda;
    const TrainResult tr = finetune(base, examples, c, seed);
    AblationRow row;
    row.lambda_tr = lambda;
    row.initial_train_loss = tr.history.front().train_loss;
    row.final_train_loss = tr.history.back().train_loss;
    row.best_val_loss = tr.history[tr.best_epoch].val_loss;
    row.epochs_run = tr.history.back().epoch;
    row.converged = row.final_train_loss < row.initial_train_loss;
    const auto cons = consistency_score(tr.model, eval_views, embedder);
    row.consistency_median = cons.summary ? cons.summary->median : 0.0;
    rows.push_back(row);
  }
  return rows;
}

std::string ablation_markdown(std::span<const AblationRow> rows) {
  std::ostringstream os;
  os.setf(std::ios::fixed);
  os.precision(4);
  os << "| lambda_tr | initial train loss | final train loss | best val loss | epochs | consistency median | converged |\n";
  os << "|---|---|---|---|---|---|---|\n";
  for (const auto& r : rows) {
    os << "| " << r.lambda_tr << " | " << r.initial_train_loss << " | " << r.final_train_loss << " | "
       << r.best_val_loss << " | " << r.epochs_run << " | " << r.consistency_median << " | "
       << (r.converged ? "yes" : "no") << " |\n";
  }
  return os.str();
}

}  // namespace embcap
