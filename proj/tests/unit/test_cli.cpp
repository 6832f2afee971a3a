#include <doctest.h>

#include <cstdio>
#include <fstream>
#include <iterator>
#include <sstream>
#include <string>
#include <vector>

#include "sempos/cli.hpp"

namespace {

struct Run {
  int code;
  std::string out, err;
};

Run cli(std::vector<std::string> args) {
  args.insert(args.begin(), "sempos_cli");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int code = sempos::run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
  return {code, out.str(), err.str()};
}

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

}  // namespace

TEST_CASE("usage errors exit with 2") {
  CHECK(cli({}).code == 2);
  CHECK(cli({"frobnicate"}).code == 2);
  const auto r = cli({"gen-data", "--n", "3", "--features", "x.semf", "--annotations", "x.jsonl",
                      "--bogus"});
  CHECK(r.code == 2);
  CHECK(r.err.find("usage error") != std::string::npos);
  CHECK(cli({"train", "--features", "x"}).code == 2);
  CHECK(cli({"--help"}).code == 0);
}

TEST_CASE("gen-data is byte-identical for equal seeds") {
  const std::vector<std::string> base = {"gen-data", "--n", "5", "--refs", "2", "--seed", "9"};
  auto a = base, b = base, c = base;
  a.insert(a.end(), {"--features", "cli_a.semf", "--annotations", "cli_a.jsonl"});
  b.insert(b.end(), {"--features", "cli_b.semf", "--annotations", "cli_b.jsonl"});
  REQUIRE(cli(a).code == 0);
  REQUIRE(cli(b).code == 0);
  CHECK(slurp("cli_a.semf") == slurp("cli_b.semf"));
  CHECK(slurp("cli_a.jsonl") == slurp("cli_b.jsonl"));
  c[6] = "10";
  c.insert(c.end(), {"--features", "cli_c.semf", "--annotations", "cli_c.jsonl"});
  REQUIRE(cli(c).code == 0);
  CHECK_FALSE(slurp("cli_a.semf") == slurp("cli_c.semf"));

  const auto stats = cli({"pos-stats", "--annotations", "cli_a.jsonl"});
  CHECK(stats.code == 0);
  CHECK(stats.out.find("captions=10\n") != std::string::npos);
  CHECK(stats.out.find("verb=100") != std::string::npos);
  for (const char* f : {"cli_a.semf", "cli_a.jsonl", "cli_b.semf", "cli_b.jsonl", "cli_c.semf",
                        "cli_c.jsonl"}) {
    std::remove(f);
  }
}

TEST_CASE("train, caption and eval round trip on a tiny corpus") {
  REQUIRE(cli({"gen-data", "--n", "4", "--refs", "1", "--frames", "3", "--objects", "2", "--dim",
               "4", "--features", "cli_t.semf", "--annotations", "cli_t.jsonl"})
              .code == 0);
  const auto tr = cli({"train", "--features", "cli_t.semf", "--annotations", "cli_t.jsonl",
                       "--checkpoint", "cli_t.semp", "--hidden", "4", "--embedding", "4",
                       "--epochs", "2", "--batch", "2", "--val-fraction", "0", "--report",
                       "cli_t_report", "--without", "aux_verb"});
  REQUIRE(tr.code == 0);
  CHECK(tr.out.find("epoch 2 l_all=") != std::string::npos);
  CHECK(tr.out.find("cider=") != std::string::npos);
  CHECK(slurp("cli_t_report.txt").find("config.wiring=w/o aux_verb") != std::string::npos);

  const auto cap = cli({"caption", "--checkpoint", "cli_t.semp", "--features", "cli_t.semf",
                        "--out", "cli_t.tsv"});
  REQUIRE(cap.code == 0);
  const auto by_ckpt = cli({"eval", "--checkpoint", "cli_t.semp", "--features", "cli_t.semf",
                            "--annotations", "cli_t.jsonl"});
  const auto by_cands = cli({"eval", "--candidates", "cli_t.tsv", "--annotations", "cli_t.jsonl"});
  REQUIRE(by_ckpt.code == 0);
  REQUIRE(by_cands.code == 0);
  CHECK(by_ckpt.out == by_cands.out);
  CHECK(cli({"eval", "--annotations", "cli_t.jsonl"}).code == 2);
  CHECK(cli({"eval", "--checkpoint", "missing.semp", "--features", "cli_t.semf", "--annotations",
             "cli_t.jsonl"})
            .code == 1);
  CHECK(cli({"train", "--features", "cli_t.semf", "--annotations", "cli_t.jsonl", "--checkpoint",
             "cli_t2.semp", "--without", "nouns"})
            .code == 2);
  for (const char* f : {"cli_t.semf", "cli_t.jsonl", "cli_t.semp", "cli_t.tsv", "cli_t_report.txt",
                        "cli_t_report.jsonl"}) {
    std::remove(f);
  }
}

TEST_CASE("gradcheck prints one verdict per check") {
  const auto r = cli({"gradcheck", "--coords", "2"});
  CHECK(r.code == 0);
  CHECK(r.out.find("PASS model_full ") != std::string::npos);
  CHECK(r.out.find("FAIL") == std::string::npos);
}
