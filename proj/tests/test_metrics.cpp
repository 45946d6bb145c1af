#include "doctest.h"
#include "embcap/metrics.hpp"
#include "fixtures.hpp"
#include "oracles.hpp"

using namespace embcap;

TEST_CASE("bleu4 hand computation") {
  // Clipped precisions 5/5, 3/4, 2/3, 1/2; brevity penalty exp(1 - 6/5).
  const double expect = 100.0 * std::exp(1.0 - 6.0 / 5.0) * std::pow(1.0 * 0.75 * (2.0 / 3.0) * 0.5, 0.25);
  CHECK(bleu4("a red couch in room", {"a red couch in the room"}) == doctest::Approx(expect).epsilon(1e-12));
}

TEST_CASE("bleu4 clipping and multiple references") {
  // Unigram "the" clipped to 2 of 4, no higher-order matches.
  const double v = bleu4("the the the the", {"the cat sat on the mat"});
  CHECK(v == doctest::Approx(oracle::bleu4("the the the the", {"the cat sat on the mat"})).epsilon(1e-9));
  CHECK(v < 1e-3);
  const std::vector<std::string> refs{"a red couch", "a red couch in the living room"};
  CHECK(bleu4("a red couch in the room", refs) ==
        doctest::Approx(oracle::bleu4("a red couch in the room", refs)).epsilon(1e-12));
  CHECK(bleu4("", refs) == 0.0);
}

TEST_CASE("rouge-l hand computation and brute-force lcs") {
  const double p = 1.0, r = 5.0 / 6.0, b2 = 1.44;
  CHECK(rouge_l("a red couch in room", "a red couch in the room") ==
        doctest::Approx(100.0 * (1 + b2) * p * r / (r + b2 * p)).epsilon(1e-12));
  Rng rng(4);
  const std::vector<std::string> vocab{"a", "b", "c", "d"};
  for (int t = 0; t < 200; ++t) {
    std::vector<std::string> x, y;
    for (std::size_t i = rng.uniform_index(9); i > 0; --i) x.push_back(vocab[rng.uniform_index(4)]);
    for (std::size_t i = rng.uniform_index(9); i > 0; --i) y.push_back(vocab[rng.uniform_index(4)]);
    CHECK(lcs_length(x, y) == oracle::lcs_brute(x, y));
  }
}

TEST_CASE("meteor-lite hand computation") {
  // 5 exact matches in 2 chunks, P = 1, R = 5/6.
  const double r = 5.0 / 6.0;
  const double fmean = 10.0 * r / (r + 9.0);
  CHECK(meteor_lite("a red couch in room", "a red couch in the room") ==
        doctest::Approx(100.0 * fmean * (1.0 - 0.5 * std::pow(2.0 / 5.0, 3))).epsilon(1e-12));
  // Suffix stems match where exact tokens do not.
  CHECK(meteor_lite("two red couches", "two red couch") > meteor_lite("two red sofas", "two red couch"));
  CHECK(meteor_lite("x", "y") == 0.0);
}

TEST_CASE("fixture metrics match the oracles") {
  std::vector<std::string> preds;
  std::vector<std::vector<std::string>> refs;
  for (const auto& [p, r] : fixture::caption_pairs()) {
    CHECK(bleu4(p, {r}) == doctest::Approx(oracle::bleu4(p, {r})).epsilon(1e-9));
    CHECK(rouge_l(p, r) == doctest::Approx(oracle::rouge_l(p, r)).epsilon(1e-9));
    preds.push_back(p);
    refs.push_back({r});
  }
  CHECK(cider(preds, refs) == doctest::Approx(oracle::cider(preds, refs)).epsilon(1e-9));
}

TEST_CASE("identity scores 100") {
  const HashingEmbedder e;
  for (std::size_t i = 0; i < 3; ++i) {
    const auto& [p, r] = fixture::caption_pairs()[i];
    CHECK(bleu4(p, {r}) == 100.0);
    CHECK(rouge_l(p, r) == 100.0);
    CHECK(embed_cosine(p, r, e) == 100.0);
  }
}

TEST_CASE("cider idf and corpus requirements") {
  CHECK_THROWS_AS(CiderScorer({{"one doc"}}), DegenerateCorpusError);
  const CiderScorer s({{"a red couch"}, {"a blue bed"}, {"a red bed"}});
  CHECK(s.idf("a") == doctest::Approx(0.0));
  CHECK(s.idf("red") == doctest::Approx(std::log(3.0) - std::log(2.0)));
  CHECK(s.idf("unseen") == doctest::Approx(std::log(3.0)));
  // Identical but only three tokens long: the 4-gram term is empty.
  CHECK(s.score("a red couch", {"a red couch"}) == doctest::Approx(7.5));
}

TEST_CASE("evaluate_run aligns predictions and annotations") {
  const HashingEmbedder e;
  const std::map<std::string, std::string> ann{{"0", "a red couch"}, {"1", "a blue bed"}, {"2", "a tv"}};
  const std::map<std::string, std::string> pred{{"0", "a red couch"}, {"1", "a blue bed"}, {"9", "noise"}};
  const auto r = evaluate_run(pred, ann, e);
  CHECK(r.instances.size() == 2);
  CHECK(r.missing == std::vector<std::string>{"2"});
  CHECK(r.unannotated == std::vector<std::string>{"9"});
  CHECK(r.mean_cs == 100.0);
  CHECK(r.mean_cider.has_value());
  const auto one = evaluate_run({{"0", "a red couch"}}, ann, e);
  CHECK_FALSE(one.mean_cider.has_value());
  CHECK_THROWS_AS(evaluate_run({{"7", "x"}}, ann, e), EvaluationError);
}
