// Acceptance run: one PASS/FAIL line per criterion, then a summary.
// Usage: sempos_acceptance [criterion numbers...]   (default: all)

#include <boost/math/distributions/chi_squared.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <iostream>
#include <iterator>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "oracles/metric_oracles.hpp"
#include "sempos/corpus.hpp"
#include "sempos/embedding.hpp"
#include "sempos/gradsuite.hpp"
#include "sempos/masking.hpp"
#include "sempos/metrics.hpp"
#include "sempos/model.hpp"
#include "sempos/trainer.hpp"

using namespace sempos;

namespace {

// Thresholds.
constexpr double kGradTolerance = 1e-4;
constexpr double kGradSeconds = 120.0;
constexpr double kOverfitLossRatio = 0.10;
constexpr double kOverfitExactFraction = 0.95;
constexpr double kOverfitSeconds = 600.0;
constexpr std::size_t kOverfitMaxVocab = 64;
constexpr int kAblationMinWins = 4;
constexpr double kChiSquareMinP = 0.01;
constexpr std::size_t kMaskDraws = 1000;
constexpr double kOracleTolerance = 1e-9;
constexpr double kGsTolerance = 1e-9;
constexpr std::size_t kLossForwards = 100;

struct Verdict {
  bool pass;
  std::string detail;
};

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string fmt(double v) {
  std::ostringstream os;
  os.precision(6);
  os << v;
  return os.str();
}

model::ModelConfig config_for(const std::vector<data::VideoSample>& corpus, std::size_t hidden,
                              std::size_t embedding) {
  model::ModelConfig m;
  m.hidden = hidden;
  m.embedding = embedding;
  m.spatial_dim = corpus.front().spatial.cols();
  m.temporal_dim = corpus.front().temporal.cols();
  m.noun_dim = corpus.front().objects.cols();
  return m;
}

// 1. Finite-difference gradient suite over every coordinate.
Verdict gradient_suite() {
  const auto t0 = std::chrono::steady_clock::now();
  check::SuiteOptions o;  // T=3, H=4, E=4
  o.coords_per_tensor = 0;
  const auto results = check::run_gradient_suite(o);
  const double secs = seconds_since(t0);
  double worst = 0.0;
  std::string worst_name, failed;
  for (const auto& r : results) {
    if (r.max_rel_error >= worst) {
      worst = r.max_rel_error;
      worst_name = r.name;
    }
    if (!(r.max_rel_error < kGradTolerance)) failed += " " + r.name;
  }
  const bool ok = failed.empty() && secs < kGradSeconds && results.size() >= 20;
  return {ok, std::to_string(results.size()) + " checks, worst " + worst_name + "=" + fmt(worst) +
                  (failed.empty() ? "" : ", failed:" + failed) + ", " + fmt(secs) + "s"};
}

// 2. Overfit a 32-video corpus with one reference per video.
Verdict overfit() {
  const auto t0 = std::chrono::steady_clock::now();
  const auto grammar = data::default_grammar(16, 0.1, 1234);
  const auto corpus = data::generate_corpus(grammar, 32, 1, 7);
  train::TrainConfig tc;
  tc.epochs = 300;
  tc.batch_size = 4;
  tc.val_fraction = 0.0;
  tc.seed = 42;
  const auto r = train::train(corpus, config_for(corpus, 64, 32), tc);
  std::size_t exact = 0;
  for (const auto& s : corpus) {
    exact += r.vocab.decode(r.model.decode_greedy(model::view(s))) == s.references.front().tokens;
  }
  const double secs = seconds_since(t0);
  const double first = r.report.epochs.front().train.l_all;
  const double last = r.report.epochs.back().train.l_all;
  const double frac = static_cast<double>(exact) / static_cast<double>(corpus.size());
  const bool ok = r.vocab.size() <= kOverfitMaxVocab && last <= kOverfitLossRatio * first &&
                  frac >= kOverfitExactFraction && secs < kOverfitSeconds;
  return {ok, "vocab " + std::to_string(r.vocab.size()) + ", l_all " + fmt(first) + " -> " +
                  fmt(last) + " (ratio " + fmt(last / first) + "), exact " +
                  std::to_string(exact) + "/32, " + fmt(secs) + "s"};
}

// 3. Ablation directionality over five seeds.
Verdict ablation() {
  const auto t0 = std::chrono::steady_clock::now();
  train::AblationConfig cfg;
  cfg.seeds = {1, 2, 3, 4, 5};
  cfg.train_videos = 32;
  cfg.test_videos = 16;
  cfg.refs_per_video = 3;
  cfg.noise_sigma = 0.5;
  cfg.corpus = {8, 4, 0.0};
  cfg.model.hidden = 32;
  cfg.model.embedding = 16;
  cfg.model.spatial_dim = cfg.model.temporal_dim = cfg.model.noun_dim = 16;
  cfg.train.epochs = 60;
  cfg.train.batch_size = 4;
  cfg.train.learning_rate = 3e-3;
  cfg.train.val_fraction = 0.0;
  cfg.variants = {{}, {"verb"}, {"glfb"}};
  const auto rows = train::run_ablation(cfg, [](const train::AblationRow& row) {
    std::cout << "  seed " << row.seed << " " << row.variant << " cider=" << fmt(row.metrics.cider)
              << " bleu4=" << fmt(row.metrics.bleu4) << '\n'
              << std::flush;
  });
  int verb_wins = 0, glfb_wins = 0;
  for (std::size_t i = 0; i + 2 < rows.size(); i += 3) {
    verb_wins += rows[i].metrics.cider >= rows[i + 1].metrics.cider;
    glfb_wins += rows[i].metrics.cider >= rows[i + 2].metrics.cider;
  }
  const bool ok = verb_wins >= kAblationMinWins && glfb_wins >= kAblationMinWins;
  return {ok, "full >= w/o verb in " + std::to_string(verb_wins) + "/5, full >= w/o glfb in " +
                  std::to_string(glfb_wins) + "/5, " + fmt(seconds_since(t0)) + "s"};
}

// 4. Masking counts, band shape and band-start uniformity.
Verdict vfm_statistics() {
  const std::size_t T = 8, D = 20;
  Tensor x({T, D}, 1.0);
  vfm::MaskConfig cfg;  // 0.30 spatial, 0.15 temporal
  Rng rng(2024);
  const std::size_t want_spatial = static_cast<std::size_t>(std::lround(0.30 * T * D));
  const std::size_t width = static_cast<std::size_t>(std::lround(0.15 * D));
  const std::size_t bins = D - width + 1;
  std::vector<double> hist(bins, 0.0);
  bool counts_ok = true, band_ok = true;
  for (std::size_t i = 0; i < kMaskDraws; ++i) {
    const auto s = vfm::mask_spatial(x, cfg, rng);
    std::size_t zeros = 0;
    for (double v : s.masked.values()) zeros += v == 0.0;
    counts_ok = counts_ok && s.masked_count() == want_spatial && zeros == want_spatial;

    const auto t = vfm::mask_temporal_chunk(x, cfg, rng);
    std::set<std::size_t> cols_zero;
    for (std::size_t r = 0; r < T; ++r) {
      std::set<std::size_t> row;
      for (std::size_t c = 0; c < D; ++c) {
        if (t.masked.at(r, c) == 0.0) row.insert(c);
      }
      if (r == 0) cols_zero = row;
      band_ok = band_ok && row == cols_zero;
    }
    band_ok = band_ok && cols_zero.size() == width &&
              *cols_zero.rbegin() - *cols_zero.begin() + 1 == width &&
              *cols_zero.begin() == t.band_start && t.band_width == width;
    if (t.band_start < bins) hist[t.band_start] += 1.0;
  }
  const double expect = static_cast<double>(kMaskDraws) / static_cast<double>(bins);
  double chi2 = 0.0;
  for (double h : hist) chi2 += (h - expect) * (h - expect) / expect;
  const boost::math::chi_squared dist(static_cast<double>(bins - 1));
  const double p = boost::math::cdf(boost::math::complement(dist, chi2));
  const bool ok = counts_ok && band_ok && p > kChiSquareMinP;
  return {ok, "spatial count " + std::to_string(want_spatial) + (counts_ok ? " exact" : " WRONG") +
                  ", band width " + std::to_string(width) + (band_ok ? " contiguous" : " BROKEN") +
                  ", chi2=" + fmt(chi2) + " df=" + std::to_string(bins - 1) + " p=" + fmt(p)};
}

metrics::EvalCorpus to_eval(const oracle::Corpus& c) {
  metrics::EvalCorpus out;
  for (const auto& it : c) out.push_back({it.cand, it.refs});
  return out;
}

// 5. Metrics against brute-force oracles, and identity corpora.
Verdict metric_oracles() {
  double worst = 0.0;
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    const auto oc = oracle::random_corpus(seed * 7919, 5);
    const auto c = to_eval(oc);
    std::vector<std::string> w;
    worst = std::max({worst, std::abs(metrics::bleu4(c) - oracle::bleu4(oc)),
                      std::abs(metrics::rouge_l(c) - oracle::rouge_l(oc)),
                      std::abs(metrics::cider(c, &w) - oracle::cider(oc))});
  }
  // Identity corpora: single reference, every sentence at least four tokens and
  // carrying a video-specific word so no n-gram order has all-zero IDF.
  bool identity_ok = true;
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    auto oc = oracle::random_corpus(seed * 104729, 5);
    for (std::size_t v = 0; v < oc.size(); ++v) {
      auto s = oc[v].refs.front();
      while (s.size() < 4) s.push_back("and");
      s.insert(s.begin(), "video" + std::to_string(v));
      oc[v].refs = {s};
      oc[v].cand = s;
    }
    const auto c = to_eval(oc);
    std::vector<std::string> w;
    identity_ok = identity_ok && metrics::bleu4(c) == 1.0 && metrics::rouge_l(c) == 1.0 &&
                  metrics::cider(c, &w) == 10.0;
  }
  const bool ok = worst < kOracleTolerance && identity_ok;
  return {ok, "max oracle gap " + fmt(worst) + " over 10 corpora, identity corpora " +
                  (identity_ok ? "exact" : "NOT exact")};
}

// 6. Grammatical score: uniform LM and shuffled sentences.
Verdict grammatical_score() {
  const std::vector<std::string> vocab = {"a", "man", "dog", "is", "running", "the", "ball",
                                          "plays", "cat", "eating", "food", "woman"};
  Rng rng(11);
  double worst = 0.0;
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<metrics::Sentence> caps(1 + rng.uniform_index(6));
    for (auto& c : caps) {
      c.resize(1 + rng.uniform_index(10));
      for (auto& w : c) w = vocab[rng.uniform_index(vocab.size())];
    }
    const double gs = metrics::grammatical_score(caps, metrics::UniformLM(vocab));
    worst = std::max(worst, std::abs(gs - static_cast<double>(vocab.size())));
  }
  const std::vector<metrics::Sentence> corpus = {
      {"a", "man", "is", "playing", "a", "guitar"},
      {"a", "dog", "is", "running", "in", "the", "park"},
      {"the", "woman", "is", "cutting", "an", "onion"},
      {"a", "cat", "is", "eating", "food"},
      {"the", "boy", "is", "riding", "a", "bike"}};
  const auto lm = metrics::ngram_lm_train(corpus, 2, 0.1);
  std::size_t shuffles = 0, higher = 0;
  for (const auto& s : corpus) {
    const double ordered = metrics::perplexity(s, *lm);
    for (int k = 0; k < 10; ++k) {
      auto sh = s;
      for (std::size_t i = sh.size(); i > 1; --i) std::swap(sh[i - 1], sh[rng.uniform_index(i)]);
      if (sh == s) continue;
      ++shuffles;
      higher += metrics::perplexity(sh, *lm) > ordered;
    }
  }
  const bool ok = worst <= kGsTolerance && higher == shuffles && shuffles > 0;
  return {ok, "uniform |GS - V| max " + fmt(worst) + ", shuffled PPL higher in " +
                  std::to_string(higher) + "/" + std::to_string(shuffles)};
}

// 7. Loss decomposition and absent-term masking.
Verdict loss_decomposition() {
  std::size_t exact = 0, masked_ok = 0, masked_trials = 0;
  Rng pick(77);
  for (std::size_t i = 0; i < kLossForwards; ++i) {
    const std::uint64_t seed = 1000 + i;
    const auto g = data::default_grammar(6, 0.2, seed);
    const auto corpus = data::generate_corpus(g, 1, 1, seed, {4, 3, 0.0});
    const auto& s = corpus.front();
    const auto vocab = data::build_vocabulary(g);
    model::ModelConfig mc = config_for(corpus, 5, 4);
    mc.vocab_size = vocab.size();
    const model::SemPosModel net(mc, seed);
    auto truth = data::extract_pos_targets(s.references.front(), data::PseudoEmbedder(4, seed));
    for (auto& p : truth.present) p = pick.uniform() < 0.7;
    const auto ids = vocab.encode(s.references.front().tokens);
    Rng mask_rng(seed);
    model::ForwardOptions opts;
    opts.mode = model::Mode::kTrain;
    opts.mask_rng = &mask_rng;
    const auto r = net.forward(model::view(s), truth, ids, opts);
    const auto& l = r.losses;
    exact += l.l_all == l.l_c + l.l_v + l.l_ds + l.l_a + l.l_do + l.l_g &&
             ad::scalar(r.total) == l.l_all;

    // Each absent term must be zero and leave no gradient: the gradient of the
    // total equals the gradient with that term present but weighted by zero.
    const std::pair<data::PosComponent, double model::LossWeights::*> terms[] = {
        {data::kVerb, &model::LossWeights::verb},
        {data::kDetSubject, &model::LossWeights::det_subject},
        {data::kAuxVerb, &model::LossWeights::aux_verb},
        {data::kDetObject, &model::LossWeights::det_object}};
    const double model::LossBreakdown::*fields[] = {
        &model::LossBreakdown::l_v, &model::LossBreakdown::l_ds, &model::LossBreakdown::l_a,
        &model::LossBreakdown::l_do};
    const auto params = net.parameters().vars();
    auto grads = [&](const data::POSGroundTruth& t, const model::ForwardOptions& o) {
      ad::zero_grad(params);
      Rng m(seed);
      auto oo = o;
      oo.mask_rng = &m;
      ad::backward(net.forward(model::view(s), t, ids, oo).total);
      std::vector<Tensor> out;
      for (const auto& p : params) out.push_back(p->grad);
      return out;
    };
    for (std::size_t k = 0; k < 4; ++k) {
      if (truth.present[terms[k].first]) continue;
      ++masked_trials;
      auto with = truth;
      with.present[terms[k].first] = true;
      auto zero_weight = opts;
      zero_weight.weights.*(terms[k].second) = 0.0;
      masked_ok += l.*(fields[k]) == 0.0 && grads(truth, opts) == grads(with, zero_weight);
    }
  }
  const bool ok = exact == kLossForwards && masked_ok == masked_trials && masked_trials > 0;
  return {ok, "exact sum on " + std::to_string(exact) + "/" + std::to_string(kLossForwards) +
                  " forwards, absent terms clean in " + std::to_string(masked_ok) + "/" +
                  std::to_string(masked_trials)};
}

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

// 8. Two identical runs agree on losses, checkpoint bytes and metrics.
Verdict determinism() {
  const auto corpus = data::generate_corpus(data::default_grammar(8, 0.1, 5), 12, 2, 5, {4, 3, 0.0});
  train::TrainConfig tc;
  tc.epochs = 8;
  tc.batch_size = 3;
  tc.learning_rate = 5e-3;
  tc.val_fraction = 0.25;
  tc.seed = 99;
  std::string ckpt[2], trace[2];
  metrics::MetricsReport rep[2];
  for (int k = 0; k < 2; ++k) {
    const auto r = train::train(corpus, config_for(corpus, 8, 8), tc);
    const std::string path = "acceptance_det_" + std::to_string(k) + ".semp";
    model::save_checkpoint(path, r.model, r.vocab);
    ckpt[k] = slurp(path);
    std::remove(path.c_str());
    std::ostringstream os;
    os.precision(17);
    for (const auto& e : r.report.epochs) {
      os << e.train.l_all << ' ' << (e.validation ? e.validation->l_all : -1.0) << '\n';
    }
    trace[k] = os.str();
    rep[k] = train::evaluate(r.model, r.vocab, corpus).metrics;
  }
  const bool ok = trace[0] == trace[1] && ckpt[0] == ckpt[1] && !ckpt[0].empty() &&
                  rep[0] == rep[1];
  return {ok, std::string("loss traces ") + (trace[0] == trace[1] ? "equal" : "DIFFER") +
                  ", checkpoints " + (ckpt[0] == ckpt[1] ? "byte-identical" : "DIFFER") +
                  ", metrics " + (rep[0] == rep[1] ? "equal" : "DIFFER")};
}

}  // namespace

int main(int argc, char** argv) {
  const std::vector<std::pair<const char*, std::function<Verdict()>>> criteria = {
      {"gradient suite", gradient_suite},
      {"overfit run", overfit},
      {"ablation directionality", ablation},
      {"VFM statistics", vfm_statistics},
      {"metric oracles", metric_oracles},
      {"grammatical score", grammatical_score},
      {"loss decomposition", loss_decomposition},
      {"determinism", determinism},
  };
  std::set<int> only;
  for (int i = 1; i < argc; ++i) only.insert(std::atoi(argv[i]));
  int failed = 0, run = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const int id = static_cast<int>(i + 1);
    if (!only.empty() && !only.count(id)) continue;
    ++run;
    Verdict v;
    try {
      v = criteria[i].second();
    } catch (const std::exception& e) {
      v = {false, std::string("threw: ") + e.what()};
    }
    failed += !v.pass;
    std::cout << (v.pass ? "PASS" : "FAIL") << " criterion " << id << " (" << criteria[i].first
              << "): " << v.detail << '\n'
              << std::flush;
  }
  std::cout << (run - failed) << "/" << run << " criteria passed\n";
  return failed == 0 ? 0 : 1;
}
