#include <set>
#include <numeric>

#include "doctest.h"
#include "embcap/trainer.hpp"

using namespace embcap;

namespace {

struct Data {
  Vocabulary vocab;
  std::vector<View> views;
  std::vector<Example> examples;
  std::vector<int> instance_of;
  std::vector<std::size_t> pool;
};

Data make_data(std::uint64_t seed, int views_per_object = 4) {
  Data d;
  NoisyCaptioner cap(NoiseConfig{});
  Rng rng(seed);
  const Scene s = generate_scene(seed + 10, SceneSpec{});
  d.views = simulate_views(s.objects(), views_per_object, cap, rng);
  d.examples = raw_caption_examples(d.views, d.vocab, kDefaultLength);
  for (const auto& e : d.examples) d.instance_of.push_back(e.view.instance_id);
  d.pool.resize(d.examples.size());
  std::iota(d.pool.begin(), d.pool.end(), 0);
  return d;
}

}  // namespace

TEST_CASE("vocabulary encodes with eos and padding") {
  const Vocabulary v;
  CHECK(v.word(Vocabulary::kPad) == "<pad>");
  const auto ids = v.encode("a red couch", 6);
  REQUIRE(ids.size() == 6);
  CHECK(ids[3] == Vocabulary::kEos);
  CHECK(ids[5] == Vocabulary::kPad);
  CHECK(v.decode(ids) == "a red couch");
  CHECK(v.encode("zzzz", 3)[0] == Vocabulary::kUnk);
  const auto cut = v.encode("a red couch near the window", 3);
  CHECK(std::find(cut.begin(), cut.end(), Vocabulary::kEos) == cut.end());
}

TEST_CASE("view descriptor layout") {
  const auto d = view_descriptor({0, 2, "a red couch", 0.5});
  REQUIRE(d.size() == static_cast<std::size_t>(kDescriptorDim));
  CHECK(d[2] == 1.0);
  CHECK(d.back() == 0.5);
  double n = 0.0;
  for (int i = kNumClasses; i < kNumClasses + kAppearanceBuckets; ++i) n += d[i] * d[i];
  CHECK(n == doctest::Approx(1.0));
}

TEST_CASE("caption loss by hand") {
  // Two positions, three classes; the second target is padding.
  const std::vector<double> probs{0.2, 0.5, 0.3, 0.1, 0.1, 0.8};
  const std::vector<int> target{1, Vocabulary::kPad};
  CHECK(caption_loss(probs, target, 3) == doctest::Approx(-std::log(0.5)));
  CHECK_THROWS_AS(caption_loss(probs, std::vector<int>{1, 7}, 3), ContractError);
  const std::vector<double> zero{0.0, 0.0, 1.0};
  CHECK(caption_loss(zero, std::vector<int>{1}, 3) == doctest::Approx(-std::log(kProbFloor)));
}

TEST_CASE("triplet loss by hand and under rotation") {
  const std::vector<double> a{0, 0}, p{3, 4}, n{0, 1};
  CHECK(euclidean(a, p) == 5.0);
  CHECK(triplet_loss(a, p, n, 2.0) == doctest::Approx(6.0));
  CHECK(triplet_loss(a, n, p, 2.0) == 0.0);
  CHECK(combined_loss(1.5, 6.0, 0.1) == doctest::Approx(2.1));

  Rng rng(6);
  for (int t = 0; t < 50; ++t) {
    std::vector<double> x(3), y(3), z(3);
    for (auto* v : {&x, &y, &z}) {
      for (auto& e : *v) e = rng.normal();
    }
    // Random rotation about the z axis followed by one about x.
    const double th = rng.uniform() * 6.28, ph = rng.uniform() * 6.28;
    auto rot = [&](std::vector<double> v) {
      const double x1 = std::cos(th) * v[0] - std::sin(th) * v[1], y1 = std::sin(th) * v[0] + std::cos(th) * v[1];
      const double y2 = std::cos(ph) * y1 - std::sin(ph) * v[2], z2 = std::sin(ph) * y1 + std::cos(ph) * v[2];
      return std::vector<double>{x1, y2, z2};
    };
    CHECK(triplet_loss(rot(x), rot(y), rot(z), 2.0) == doctest::Approx(triplet_loss(x, y, z, 2.0)).epsilon(1e-9));
  }
}

TEST_CASE("triplet sampling respects instances") {
  const Data d = make_data(1);
  Rng rng(2);
  std::vector<std::size_t> batch{0, 5, 9, 13};
  const auto tb = sample_triplets(batch, d.pool, d.instance_of, rng);
  REQUIRE(tb.size() == 4);
  for (std::size_t i = 0; i < tb.size(); ++i) {
    CHECK(tb.anchors[i] != tb.positives[i]);
    CHECK(d.instance_of[tb.anchors[i]] == d.instance_of[tb.positives[i]]);
    CHECK(d.instance_of[tb.anchors[i]] != d.instance_of[tb.negatives[i]]);
  }
  // A pool holding one view per instance yields no positives.
  const std::vector<std::size_t> sparse{0, 4, 8};
  const auto none = sample_triplets(sparse, sparse, d.instance_of, rng);
  CHECK(none.empty());
  CHECK(none.skipped_single_view == 3);
}

TEST_CASE("analytic gradient matches central differences") {
  const Data d = make_data(3);
  for (int b = 0; b < 6; ++b) {
    Rng rng(500 + b);
    const ToyCaptioner m(d.vocab, 16, 8, rng, 0.3);
    std::vector<Example> ex = d.examples;
    for (auto& e : ex) e.target.resize(8, Vocabulary::kPad);
    std::vector<std::size_t> batch;
    for (int k = 0; k < 6; ++k) batch.push_back(rng.uniform_index(ex.size()));
    const auto tb = sample_triplets(batch, d.pool, d.instance_of, rng);
    LossConfig cfg;
    cfg.lambda_tr = b % 2 ? 1.0 : 0.1;
    const auto r = grad_check(m, ex, batch, tb, cfg, rng, 48);
    if (!r.max_rel_error) continue;
    CHECK(*r.max_rel_error < 1e-5);
  }
}

TEST_CASE("early stopping trace") {
  EarlyStopper s(3);
  const std::vector<double> trace{5, 4, 3, 3.5, 4, 4.5};
  std::vector<bool> stops;
  for (std::size_t e = 0; e < trace.size(); ++e) stops.push_back(s.update(static_cast<int>(e), trace[e]));
  CHECK(stops == std::vector<bool>{false, false, false, false, false, true});
  CHECK(s.best_epoch() == 2);
  EarlyStopper eq(2);
  eq.update(0, 1.0);
  CHECK_FALSE(eq.update(1, 1.0));
  CHECK(eq.update(2, 1.0));  // ties do not count as improvement
}

TEST_CASE("validation split keeps instances whole") {
  const Data d = make_data(4);
  Rng rng(1);
  std::vector<std::size_t> train, val;
  split_by_instance(d.examples, 0.2, rng, train, val);
  CHECK(train.size() + val.size() == d.examples.size());
  std::set<int> ti, vi;
  for (auto i : train) ti.insert(d.instance_of[i]);
  for (auto i : val) vi.insert(d.instance_of[i]);
  for (int i : vi) CHECK_FALSE(ti.count(i));
  CHECK(vi.size() == 2);  // ceil(0.2 * 8)
}

TEST_CASE("finetune is seeded, keeps the best epoch and validates its config") {
  const Data d = make_data(5);
  Rng init(9);
  const ToyCaptioner m(d.vocab, kDefaultFeatures, kDefaultLength, init);
  LossConfig cfg = pretrain_config();
  cfg.epochs = 8;
  const auto a = finetune(m, d.examples, cfg, 3);
  const auto b = finetune(m, d.examples, cfg, 3);
  CHECK(a.model == b.model);
  CHECK(a.history.front().epoch == 0);
  double best = a.history.front().val_loss;
  for (const auto& h : a.history) best = std::min(best, h.val_loss);
  CHECK(a.history[a.best_epoch].val_loss == best);
  CHECK(a.history.back().train_loss < a.history.front().train_loss);

  cfg.epochs = 0;
  CHECK(finetune(m, d.examples, cfg, 3).model == m);
  cfg.margin = 0.0;
  CHECK_THROWS_AS(finetune(m, d.examples, cfg, 3), ContractError);
  CHECK_THROWS_AS(finetune(m, std::vector<Example>{}, LossConfig{}, 3), ContractError);
}

TEST_CASE("quartiles interpolate linearly") {
  const auto q = quartiles({4, 1, 3, 2});
  CHECK(q.min == 1);
  CHECK(q.q1 == doctest::Approx(1.75));
  CHECK(q.median == doctest::Approx(2.5));
  CHECK(q.q3 == doctest::Approx(3.25));
  CHECK(q.max == 4);
  CHECK_THROWS(quartiles({}));
}

TEST_CASE("consistency of a constant captioner is 1") {
  const Data d = make_data(6);
  Rng init(1);
  ToyCaptioner m(d.vocab, 4, 4, init);
  // Zero weights and a fixed bias make every view decode to the same words.
  auto p = m.params();
  std::fill(p.begin(), p.end(), 0.0);
  for (int t = 0; t < 3; ++t) p[m.c_offset() + static_cast<std::size_t>(t) * m.classes() + d.vocab.id("red")] = 5.0;
  m.set_params(p);
  const HashingEmbedder e;
  const auto r = consistency_score(m, d.views, e);
  REQUIRE(r.summary);
  CHECK(r.summary->min == 1.0);
  CHECK(r.scores.size() == 8);
}

TEST_CASE("lambda ablation runs every setting") {
  const Data d = make_data(7, 5);
  Rng init(2);
  const ToyCaptioner m(d.vocab, kDefaultFeatures, kDefaultLength, init);
  const HashingEmbedder e;
  LossConfig cfg;
  cfg.learning_rate = 1e-2;
  const auto rows = lambda_ablation(m, d.examples, d.views, e, cfg, ablation_lambdas(), 4);
  REQUIRE(rows.size() == 3);
  CHECK(rows[0].lambda_tr == 1.0);
  CHECK(rows[2].lambda_tr == 0.1);
  for (const auto& r : rows) CHECK(r.converged == (r.final_train_loss < r.initial_train_loss));
  const auto md = ablation_markdown(rows);
  CHECK(std::count(md.begin(), md.end(), '\n') == 5);
}
