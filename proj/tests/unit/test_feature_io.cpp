#include <doctest.h>

#include <cstdio>
#include <fstream>
#include <iterator>

#include "sempos/errors.hpp"
#include "sempos/feature_io.hpp"

using namespace sempos;
using namespace sempos::data;

namespace {

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

void spit(const std::string& path, const std::string& bytes) {
  std::ofstream(path, std::ios::binary) << bytes;
}

// The payload is stored at single precision.
Tensor as_f32(const Tensor& t) {
  Tensor out = t;
  for (double& v : out.values()) v = static_cast<double>(static_cast<float>(v));
  return out;
}

}  // namespace

TEST_CASE("features round trip at single precision") {
  const auto corpus = generate_corpus(default_grammar(), 5, 2, 3, {4, 3, 0.0});
  save_features("fio_rt.semf", corpus);
  const auto back = load_features("fio_rt.semf");
  REQUIRE(back.size() == corpus.size());
  for (std::size_t i = 0; i < back.size(); ++i) {
    CHECK(back[i].video_id == corpus[i].video_id);
    CHECK(back[i].spatial == as_f32(corpus[i].spatial));
    CHECK(back[i].temporal == as_f32(corpus[i].temporal));
    CHECK(back[i].objects == as_f32(corpus[i].objects));
  }
  // Header plus per-video id and three rank-2 tensors.
  std::size_t expect = 4 + 2 + 4;
  for (const auto& s : corpus) {
    expect += 4 + s.video_id.size();
    for (const Tensor* t : {&s.spatial, &s.temporal, &s.objects}) expect += 4 + 8 + 4 * t->size();
  }
  CHECK(slurp("fio_rt.semf").size() == expect);
  std::remove("fio_rt.semf");
}

TEST_CASE("corrupt feature files are rejected") {
  const auto corpus = generate_corpus(default_grammar(), 2, 1, 3);
  save_features("fio_bad.semf", corpus);
  const std::string good = slurp("fio_bad.semf");

  spit("fio_bad.semf", "XEMF" + good.substr(4));
  CHECK_THROWS_AS(load_features("fio_bad.semf"), CorruptFile);

  std::string v = good;
  v[4] = 9;
  spit("fio_bad.semf", v);
  CHECK_THROWS_AS(load_features("fio_bad.semf"), VersionMismatch);

  spit("fio_bad.semf", good.substr(0, good.size() - 3));
  CHECK_THROWS_AS(load_features("fio_bad.semf"), CorruptFile);

  spit("fio_bad.semf", good + "x");
  CHECK_THROWS_AS(load_features("fio_bad.semf"), CorruptFile);

  CHECK_THROWS_AS(load_features("fio_missing.semf"), CorruptFile);
  std::remove("fio_bad.semf");
}

TEST_CASE("annotations round trip and join with features") {
  CorpusOptions opts;
  opts.drop_object_rate = 0.5;
  const auto corpus = generate_corpus(default_grammar(), 8, 3, 21, opts);
  save_features("fio_join.semf", corpus);
  save_annotations("fio_join.jsonl", corpus);
  const auto ann = load_annotations("fio_join.jsonl");
  REQUIRE(ann.size() == corpus.size());
  for (std::size_t i = 0; i < ann.size(); ++i) CHECK(ann[i].captions == corpus[i].references);
  const auto samples = load_samples("fio_join.semf", "fio_join.jsonl");
  REQUIRE(samples.size() == corpus.size());
  CHECK(samples[3].references == corpus[3].references);
  CHECK(samples[3].video_id == corpus[3].video_id);
  std::remove("fio_join.semf");
  std::remove("fio_join.jsonl");
}

TEST_CASE("malformed annotation lines name the line") {
  spit("fio_mal.jsonl",
       "{\"video_id\": \"v\", \"captions\": [{\"tokens\": [\"a\", \"dog\"], \"verb\": \"runs\"}]}\n");
  CHECK_THROWS_AS(load_annotations("fio_mal.jsonl"), MalformedAnnotation);
  spit("fio_mal.jsonl", "not json\n");
  try {
    load_annotations("fio_mal.jsonl");
    FAIL("expected MalformedAnnotation");
  } catch (const MalformedAnnotation& e) {
    CHECK(std::string(e.what()).find(":1:") != std::string::npos);
  }
  std::remove("fio_mal.jsonl");
}

TEST_CASE("candidates round trip") {
  const std::vector<Candidate> c = {{"v1", {"a", "man", "is", "running"}}, {"v2", {}}};
  save_candidates("fio_c.tsv", c);
  const auto back = load_candidates("fio_c.tsv");
  REQUIRE(back.size() == 2);
  CHECK(back[0].video_id == "v1");
  CHECK(back[0].tokens == c[0].tokens);
  CHECK(back[1].tokens.empty());
  spit("fio_c.tsv", "no tab here\n");
  CHECK_THROWS_AS(load_candidates("fio_c.tsv"), CorruptFile);
  std::remove("fio_c.tsv");
}
