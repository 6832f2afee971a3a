#include <doctest.h>

#include <cmath>

#include "../oracles/metric_oracles.hpp"
#include "sempos/errors.hpp"
#include "sempos/metrics.hpp"

using namespace sempos;
using namespace sempos::metrics;

namespace {

Sentence words(const std::string& text) {
  Sentence out;
  std::string w;
  for (char ch : text + ' ') {
    if (ch == ' ') {
      if (!w.empty()) out.push_back(w);
      w.clear();
    } else {
      w += ch;
    }
  }
  return out;
}

EvalCorpus single(const std::string& cand, std::vector<std::string> refs) {
  EvalItem it{words(cand), {}};
  for (const auto& r : refs) it.references.push_back(words(r));
  return {it};
}

EvalCorpus to_eval(const oracle::Corpus& c) {
  EvalCorpus out;
  for (const auto& it : c) out.push_back({it.cand, it.refs});
  return out;
}

}  // namespace

TEST_CASE("normalize lower-cases and rejects degenerate corpora") {
  const auto c = normalize(single("A Man", {"a MAN"}));
  CHECK(c[0].candidate == Sentence{"a", "man"});
  CHECK(c[0].references[0] == Sentence{"a", "man"});
  CHECK_THROWS_AS(normalize({}), EmptyCorpus);
  CHECK_THROWS_AS(normalize({EvalItem{{"a"}, {}}}), InvalidConfig);
  CHECK_THROWS_AS(bleu4({}), EmptyCorpus);
  CHECK_THROWS_AS(cider({}), EmptyCorpus);
  CHECK_THROWS_AS(meteor_lite({}), EmptyCorpus);
  CHECK_THROWS_AS(rouge_l({}), EmptyCorpus);
}

TEST_CASE("BLEU identity, disjoint and brevity") {
  CHECK(bleu4(single("a man is playing a guitar", {"a man is playing a guitar"})) == 1.0);
  CHECK(bleu4(single("x y z w", {"a b c d"})) == 0.0);
  // Four-gram precision 1 with a short candidate: only the brevity penalty remains.
  const double b = bleu4(single("a b c d", {"a b c d e f"}));
  CHECK(b == doctest::Approx(std::exp(1.0 - 6.0 / 4.0)).epsilon(1e-14));
  // The closer reference length wins, ties to the shorter.
  CHECK(bleu4(single("a b c d e", {"a b c d", "a b c d e f"})) ==
        doctest::Approx(oracle::bleu4({{words("a b c d e"), {words("a b c d"), words("a b c d e f")}}})));
}

TEST_CASE("ROUGE-L hand cases") {
  CHECK(rouge_l(single("a b c", {"a b c"})) == 1.0);
  CHECK(rouge_l(single("a b", {"c d"})) == 0.0);
  CHECK(rouge_l(single("a b c d", {"a c d e"})) == doctest::Approx(0.75).epsilon(1e-15));
  CHECK(rouge_l(single("a b c d", {"z", "a c d e"})) == doctest::Approx(0.75).epsilon(1e-15));
}

TEST_CASE("CIDEr identity, disjoint and single-video warning") {
  std::vector<std::string> warnings;
  CHECK(cider(single("a man runs fast", {"a man runs fast"}), &warnings) == 10.0);
  CHECK(warnings.size() == 1);
  // Three tokens have no 4-gram, so that order contributes a zero cosine.
  CHECK(cider(single("a man runs", {"a man runs"}), &warnings) == 7.5);
  CHECK(cider(single("a b", {"c d"}), &warnings) == 0.0);
  EvalCorpus two = single("a man runs fast", {"a man runs fast"});
  two.push_back({words("the dog sits down"), {words("the dog sits down")}});
  warnings.clear();
  CHECK(cider(two, &warnings) == 10.0);
  CHECK(warnings.empty());
}

TEST_CASE("METEOR-lite hand arithmetic") {
  CHECK(meteor_lite(single("a b c", {"a b c"})) ==
        doctest::Approx(1.0 - 0.5 / 27.0).epsilon(1e-15));
  CHECK(meteor_lite(single("x y", {"a b"})) == 0.0);
  const double ordered = meteor_lite(single("a b c d", {"a b c d"}));
  const double permuted = meteor_lite(single("b a d c", {"a b c d"}));
  CHECK(permuted < ordered);
  // Stem matches count: "runs" ~ "running" both stem to "run".
  CHECK(stem("running") == "runn");
  CHECK(stem("runs") == "run");
  CHECK(stem("dogs") == "dog");
  CHECK(stem("is") == "is");
  CHECK(meteor_lite(single("a dog plays", {"a dog played"})) ==
        doctest::Approx(1.0 - 0.5 / 27.0).epsilon(1e-15));
  // P = 2/3, R = 2/2, one chunk of two.
  const double p = 2.0 / 3.0, r = 1.0, f = 10 * p * r / (r + 9 * p);
  CHECK(meteor_lite(single("a b c", {"a b"})) == doctest::Approx(f * (1 - 0.5 / 8.0)).epsilon(1e-14));
}

TEST_CASE("BLEU, ROUGE-L and CIDEr match brute-force oracles on random corpora") {
  for (std::uint64_t seed = 100; seed < 140; ++seed) {
    const auto oc = oracle::random_corpus(seed);
    const auto c = to_eval(oc);
    std::vector<std::string> w;
    CHECK(std::abs(bleu4(c) - oracle::bleu4(oc)) < 1e-9);
    CHECK(std::abs(rouge_l(c) - oracle::rouge_l(oc)) < 1e-9);
    CHECK(std::abs(cider(c, &w) - oracle::cider(oc)) < 1e-9);
  }
}

TEST_CASE("metrics are invariant to video order and stay in range") {
  for (std::uint64_t seed = 200; seed < 210; ++seed) {
    auto c = to_eval(oracle::random_corpus(seed));
    std::vector<std::string> w;
    const auto a = score_corpus(c);
    std::reverse(c.begin(), c.end());
    const auto b = score_corpus(c);
    CHECK(a.bleu4 == doctest::Approx(b.bleu4).epsilon(1e-14));
    CHECK(a.rouge_l == doctest::Approx(b.rouge_l).epsilon(1e-14));
    CHECK(a.cider == doctest::Approx(b.cider).epsilon(1e-12));
    CHECK(a.meteor == doctest::Approx(b.meteor).epsilon(1e-14));
    CHECK(a.gs == doctest::Approx(b.gs).epsilon(1e-12));
    for (double x : {a.bleu4, a.rouge_l, a.meteor}) {
      CHECK(x >= 0.0);
      CHECK(x <= 1.0);
    }
    CHECK(a.cider >= 0.0);
    CHECK(a.cider <= 10.0 + 1e-12);
    CHECK(a.gs >= 1.0);
  }
}

TEST_CASE("uniform LM perplexity is the vocabulary size") {
  const UniformLM lm({"a", "b", "c", "d", "e", "f", "g"});
  const std::vector<Sentence> caps = {{"a"}, {"b", "zzz", "c"}, words("a b c d e f g a b")};
  CHECK(std::abs(grammatical_score(caps, lm) - 7.0) < 1e-9);
  CHECK_THROWS_AS(grammatical_score({{}}, lm), EmptyCaption);
  CHECK_THROWS_AS(grammatical_score({}, lm), EmptyCorpus);
}

TEST_CASE("LM giving probability one yields perplexity one") {
  struct Certain : LanguageModel {
    double log_prob(std::span<const std::string>, const std::string&) const override { return 0.0; }
    std::vector<std::string> vocabulary() const override { return {"a"}; }
  };
  CHECK(perplexity(words("a a a"), Certain{}) == 1.0);
}

TEST_CASE("bigram LM hand counts on a two-sentence corpus") {
  const auto lm = ngram_lm_train({words("a b"), words("a c")}, 2, 0.5);
  // Vocabulary: a, b, c, </s>, <unk>.
  CHECK(lm->vocabulary().size() == 5);
  CHECK(lm->count({"<s>"}, "a") == 2);
  CHECK(lm->count({"a"}, "b") == 1);
  CHECK(lm->count({"b"}, "</s>") == 1);
  const Sentence a = {"a"}, none;
  CHECK(lm->prob(none, "a") == doctest::Approx((2 + 0.5) / (2 + 0.5 * 5)).epsilon(1e-15));
  CHECK(lm->prob(a, "b") == doctest::Approx((1 + 0.5) / (2 + 0.5 * 5)).epsilon(1e-15));
  CHECK(lm->prob(a, "dog") == doctest::Approx(0.5 / (2 + 0.5 * 5)).epsilon(1e-15));
  const Sentence b = {"b"};
  CHECK(lm->prob(b, "</s>") == doctest::Approx(1.5 / 3.5).epsilon(1e-15));
  // PPL of "a b": p(a|<s>) p(b|a) p(</s>|b).
  const double ppl = std::exp(-(std::log(2.5 / 4.5) + std::log(1.5 / 4.5) + std::log(1.5 / 3.5)) / 3);
  CHECK(perplexity(words("a b"), *lm) == doctest::Approx(ppl).epsilon(1e-14));
  CHECK_THROWS_AS(ngram_lm_train({}, 2, 0.1), EmptyCorpus);
  CHECK_THROWS_AS(ngram_lm_train({{"a"}}, 0, 0.1), InvalidConfig);
  CHECK_THROWS_AS(ngram_lm_train({{"a"}}, 2, 0.0), InvalidConfig);
}

TEST_CASE("n-gram probabilities normalize in every context") {
  const auto lm = ngram_lm_train(
      {words("a man is running"), words("a dog is sitting"), words("the man plays")}, 3, 0.2);
  const auto vocab = lm->vocabulary();
  for (const Sentence& h : {Sentence{}, Sentence{"a"}, Sentence{"a", "man"}, Sentence{"zz", "is"}}) {
    double s = 0.0;
    for (const auto& w : vocab) s += lm->prob(h, w);
    CHECK(std::abs(s - 1.0) < 1e-9);
  }
}

TEST_CASE("large k pushes a unigram LM toward uniform") {
  const auto lm = ngram_lm_train({words("a a a b")}, 1, 1e9);
  const Sentence none;
  CHECK(lm->prob(none, "a") == doctest::Approx(1.0 / 4.0).epsilon(1e-8));
  CHECK(lm->prob(none, "b") == doctest::Approx(1.0 / 4.0).epsilon(1e-8));
}

TEST_CASE("shuffled sentences are less fluent under a bigram LM") {
  const std::vector<Sentence> corpus = {words("a man is playing a guitar"), words("a dog is running"),
                                        words("the woman is cutting an onion"),
                                        words("a cat is eating food"), words("the boy is riding a bike")};
  const auto lm = ngram_lm_train(corpus, 2, 0.1);
  CHECK(perplexity(words("guitar a playing man a is"), *lm) > perplexity(corpus[0], *lm));
  CHECK(perplexity(words("running is dog a"), *lm) > perplexity(corpus[1], *lm));
}

TEST_CASE("score_corpus on identity and empty candidates") {
  EvalCorpus c = single("a man is running", {"a man is running"});
  c.push_back({words("the dog sits down"), {words("the dog sits down")}});
  const auto r = score_corpus(c);
  CHECK(r.videos == 2);
  CHECK(r.bleu4 == 1.0);
  CHECK(r.rouge_l == 1.0);
  CHECK(r.cider == 10.0);
  c[0].candidate.clear();
  const auto e = score_corpus(c);
  CHECK(e.bleu4 < 1.0);
  CHECK(std::isfinite(e.gs));
  CHECK(to_text(r).find("cider=10\n") != std::string::npos);
  CHECK(to_json(r).find("\"videos\":2") != std::string::npos);
}
