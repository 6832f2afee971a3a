#include "sempos/trainer.hpp"

#include <chrono>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>
#include <sstream>
#include <json.hpp>

#include "sempos/errors.hpp"

namespace sempos::train {

using model::LossBreakdown;

// --- optimizer ---

namespace {

void adam_update(Tensor& p, const Tensor& g, Tensor& m, Tensor& v, double lr_t,
                 const AdamConfig& cfg, double bc2) {
  auto pv = p.values();
  auto mv = m.values();
  auto vv = v.values();
  const auto gv = g.values();
  for (std::size_t i = 0; i < pv.size(); ++i) {
    mv[i] = cfg.beta1 * mv[i] + (1.0 - cfg.beta1) * gv[i];
    vv[i] = cfg.beta2 * vv[i] + (1.0 - cfg.beta2) * gv[i] * gv[i];
    pv[i] -= lr_t * mv[i] / (std::sqrt(vv[i] / bc2) + cfg.epsilon);
  }
}

void prepare_moments(AdamState& state, std::span<const Shape* const> shapes) {
  if (state.m.empty() && state.v.empty()) {
    for (const Shape* s : shapes) {
      state.m.emplace_back(*s);
      state.v.emplace_back(*s);
    }
  }
  if (state.m.size() != shapes.size() || state.v.size() != shapes.size()) {
    throw DimensionMismatch("adam: parameter count changed between steps");
  }
  for (std::size_t i = 0; i < shapes.size(); ++i) {
    if (state.m[i].shape() != *shapes[i] || state.v[i].shape() != *shapes[i]) {
      throw DimensionMismatch("adam: moment shape mismatch at parameter " + std::to_string(i));
    }
  }
}

}  // namespace

void adam_step(std::vector<Tensor>& params, const std::vector<Tensor>& grads, AdamState& state,
               const AdamConfig& cfg) {
  if (params.size() != grads.size()) throw DimensionMismatch("adam: params vs grads count");
  std::vector<const Shape*> shapes;
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (params[i].shape() != grads[i].shape()) {
      throw DimensionMismatch("adam: gradient shape mismatch at parameter " + std::to_string(i));
    }
    shapes.push_back(&params[i].shape());
  }
  prepare_moments(state, shapes);
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double bc1 = 1.0 - std::pow(cfg.beta1, t);
  const double bc2 = 1.0 - std::pow(cfg.beta2, t);
  for (std::size_t i = 0; i < params.size(); ++i) {
    adam_update(params[i], grads[i], state.m[i], state.v[i], cfg.learning_rate / bc1, cfg, bc2);
  }
}

void adam_step(std::span<const Var> params, AdamState& state, const AdamConfig& cfg) {
  std::vector<const Shape*> shapes;
  for (const auto& p : params) shapes.push_back(&p->value.shape());
  prepare_moments(state, shapes);
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double bc1 = 1.0 - std::pow(cfg.beta1, t);
  const double bc2 = 1.0 - std::pow(cfg.beta2, t);
  for (std::size_t i = 0; i < params.size(); ++i) {
    Tensor& g = ad::ensure_grad(*params[i]);
    adam_update(params[i]->value, g, state.m[i], state.v[i], cfg.learning_rate / bc1, cfg, bc2);
  }
}

double clip_grad_norm(std::span<const Var> params, double max_norm) {
  double sq = 0.0;
  for (const auto& p : params) {
    for (double g : ad::ensure_grad(*p).values()) sq += g * g;
  }
  const double norm = std::sqrt(sq);
  if (max_norm > 0.0 && norm > max_norm) {
    const double f = max_norm / norm;
    for (const auto& p : params) {
      for (double& g : p->grad.values()) g *= f;
    }
  }
  return norm;
}

// --- configuration ---

void TrainConfig::validate() const {
  if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate)) {
    throw InvalidConfig("learning rate must be finite and nonnegative");
  }
  if (batch_size == 0) throw InvalidConfig("batch size must be at least 1");
  if (!(val_fraction >= 0.0 && val_fraction < 1.0)) {
    throw InvalidConfig("validation fraction must lie in [0, 1)");
  }
  mask.validate();
}

bool in_validation_split(const std::string& video_id, double fraction, std::uint64_t seed) {
  if (fraction <= 0.0) return false;
  const std::uint64_t h = splitmix64(hash_string(video_id) ^ splitmix64(seed ^ 0x7a11d5u));
  // Top 53 bits as a uniform double in [0, 1).
  const double u = static_cast<double>(h >> 11) * 0x1.0p-53;
  return u < fraction;
}

// --- training ---

namespace {

struct Prepared {
  const data::VideoSample* sample;
  std::vector<std::vector<std::size_t>> captions;
  std::vector<data::POSGroundTruth> truths;
};

std::vector<Prepared> prepare(const std::vector<const data::VideoSample*>& samples,
                              const data::Vocabulary& vocab, const data::Embedder& embedder) {
  std::vector<Prepared> out;
  out.reserve(samples.size());
  for (const auto* s : samples) {
    if (s->references.empty()) {
      throw MalformedAnnotation("video " + s->video_id + " has no reference captions");
    }
    Prepared p{s, {}, {}};
    for (const auto& ref : s->references) {
      p.captions.push_back(vocab.encode(ref.tokens));
      p.truths.push_back(data::extract_pos_targets(ref, embedder));
    }
    out.push_back(std::move(p));
  }
  return out;
}

void check_finite(const LossBreakdown& l, const std::string& where) {
  if (!std::isfinite(l.l_all)) {
    std::ostringstream os;
    os << "non-finite loss at " << where << " (l_c=" << l.l_c << " l_v=" << l.l_v
       << " l_ds=" << l.l_ds << " l_a=" << l.l_a << " l_do=" << l.l_do << " l_g=" << l.l_g << ")";
    throw TrainingDiverged(os.str());
  }
}

LossBreakdown mean_prepared(const model::SemPosModel& m, const std::vector<Prepared>& samples,
                            const model::LossWeights& weights) {
  ad::NoGradGuard no_grad;
  model::ForwardOptions opts;
  opts.mode = model::Mode::kEval;
  opts.weights = weights;
  LossBreakdown sum;
  std::size_t n = 0;
  for (const auto& p : samples) {
    for (std::size_t r = 0; r < p.captions.size(); ++r) {
      sum += m.forward(model::view(*p.sample), p.truths[r], p.captions[r], opts).losses;
      ++n;
    }
  }
  return n ? sum.scaled(1.0 / static_cast<double>(n)) : sum;
}

}  // namespace

LossBreakdown mean_loss(const model::SemPosModel& model, const data::Vocabulary& vocab,
                        const std::vector<data::VideoSample>& samples,
                        const data::Embedder& embedder, const model::LossWeights& weights) {
  std::vector<const data::VideoSample*> ptrs;
  for (const auto& s : samples) ptrs.push_back(&s);
  return mean_prepared(model, prepare(ptrs, vocab, embedder), weights);
}

TrainResult train(const std::vector<data::VideoSample>& corpus, model::ModelConfig model_config,
                  const TrainConfig& config, const std::optional<data::Vocabulary>& vocab_in,
                  const ProgressFn& progress) {
  if (corpus.empty()) throw EmptyCorpus("training corpus is empty");
  config.validate();
  const auto t0 = std::chrono::steady_clock::now();

  data::Vocabulary vocab = vocab_in ? *vocab_in : data::build_vocabulary(corpus);
  model_config.vocab_size = vocab.size();
  const Rng root(config.seed);
  Rng init = root.substream("init");
  Rng shuffle = root.substream("shuffle");
  Rng mask = root.substream("mask");
  Rng sample = root.substream("sample");

  model::SemPosModel net(model_config, init.next_u64());
  const data::PseudoEmbedder embedder(model_config.embedding, config.embed_seed);

  std::vector<const data::VideoSample*> train_ptrs, val_ptrs;
  for (const auto& s : corpus) {
    (in_validation_split(s.video_id, config.val_fraction, config.seed) ? val_ptrs : train_ptrs)
        .push_back(&s);
  }
  // A tiny corpus could hash entirely into validation; train on everything then.
  if (train_ptrs.empty()) {
    train_ptrs.insert(train_ptrs.end(), val_ptrs.begin(), val_ptrs.end());
    val_ptrs.clear();
  }
  const auto train_set = prepare(train_ptrs, vocab, embedder);
  const auto val_set = prepare(val_ptrs, vocab, embedder);

  RunReport report;
  report.model_config = model_config;
  report.config = config;
  report.train_videos = train_set.size();
  report.validation_videos = val_set.size();

  const std::vector<Var> params = net.parameters().vars();
  AdamState adam;
  const AdamConfig adam_cfg = config.adam();
  model::ForwardOptions opts;
  opts.mode = model::Mode::kTrain;
  opts.mask = config.mask;
  opts.mask_rng = &mask;
  opts.weights = config.weights;

  std::vector<Tensor> best = net.snapshot();
  double best_val = std::numeric_limits<double>::infinity();
  std::vector<std::size_t> order(train_set.size());

  for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    for (std::size_t i = order.size(); i > 1; --i) {
      std::swap(order[i - 1], order[shuffle.uniform_index(i)]);
    }
    EpochRecord rec;
    rec.epoch = epoch;
    for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
      const std::size_t end = std::min(order.size(), start + config.batch_size);
      ad::zero_grad(params);
      for (std::size_t b = start; b < end; ++b) {
        const Prepared& p = train_set[order[b]];
        const std::size_t r = sample.uniform_index(p.captions.size());
        auto out = net.forward(model::view(*p.sample), p.truths[r], p.captions[r], opts);
        check_finite(out.losses, "epoch " + std::to_string(epoch) + ", " + p.sample->video_id);
        ad::backward(out.total);
        rec.train += out.losses;
      }
      const double inv = 1.0 / static_cast<double>(end - start);
      for (const auto& v : params) {
        for (double& g : ad::ensure_grad(*v).values()) g *= inv;
      }
      const double norm = clip_grad_norm(params, config.clip_norm);
      if (!std::isfinite(norm)) {
        throw TrainingDiverged("non-finite gradient norm at epoch " + std::to_string(epoch));
      }
      adam_step(params, adam, adam_cfg);
    }
    rec.train = rec.train.scaled(1.0 / static_cast<double>(train_set.size()));
    if (!val_set.empty()) {
      rec.validation = mean_prepared(net, val_set, config.weights);
      check_finite(*rec.validation, "validation after epoch " + std::to_string(epoch));
      if (rec.validation->l_all < best_val) {
        best_val = rec.validation->l_all;
        best = net.snapshot();
        report.best_epoch = epoch;
      }
    }
    report.epochs.push_back(rec);
    if (progress) progress(rec);
  }
  ad::zero_grad(params);
  if (val_set.empty()) {
    report.best_epoch = config.epochs;
  } else if (report.best_epoch != 0) {
    net.restore(best);
  }
  report.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return {std::move(net), std::move(vocab), std::move(report)};
}

// --- evaluation ---

Evaluation evaluate(const model::SemPosModel& model, const data::Vocabulary& vocab,
                    const std::vector<data::VideoSample>& samples) {
  if (samples.empty()) throw EmptyCorpus("evaluation corpus is empty");
  if (vocab.size() != model.config().vocab_size) {
    throw DimensionMismatch("vocabulary does not match the model");
  }
  Evaluation ev;
  metrics::EvalCorpus corpus;
  for (const auto& s : samples) {
    const auto ids = model.decode_greedy(model::view(s));
    data::Candidate cand{s.video_id, vocab.decode(ids)};
    metrics::EvalItem item{cand.tokens, {}};
    for (const auto& r : s.references) item.references.push_back(r.tokens);
    corpus.push_back(std::move(item));
    ev.candidates.push_back(std::move(cand));
  }
  ev.metrics = metrics::score_corpus(metrics::normalize(std::move(corpus)));
  return ev;
}

metrics::MetricsReport evaluate_candidates(const std::vector<data::Candidate>& candidates,
                                           const std::vector<data::AnnotationRecord>& references) {
  std::map<std::string, const data::AnnotationRecord*> by_id;
  for (const auto& r : references) by_id[r.video_id] = &r;
  metrics::EvalCorpus corpus;
  for (const auto& c : candidates) {
    auto it = by_id.find(c.video_id);
    if (it == by_id.end() || it->second->captions.empty()) {
      throw MalformedAnnotation("no references for candidate " + c.video_id);
    }
    metrics::EvalItem item{c.tokens, {}};
    for (const auto& cap : it->second->captions) item.references.push_back(cap.tokens);
    corpus.push_back(std::move(item));
  }
  return metrics::score_corpus(metrics::normalize(std::move(corpus)));
}

// --- ablation ---

std::vector<AblationRow> run_ablation(const AblationConfig& config,
                                      const std::function<void(const AblationRow&)>& progress) {
  if (config.seeds.empty()) throw InvalidConfig("ablation needs at least one seed");
  const std::size_t dim = config.model.spatial_dim;
  if (config.model.temporal_dim != dim || config.model.noun_dim != dim) {
    throw InvalidConfig("synthetic features need equal spatial, temporal and noun dims");
  }
  std::vector<AblationRow> rows;
  for (std::uint64_t seed : config.seeds) {
    const auto grammar = data::default_grammar(dim, config.noise_sigma, splitmix64(seed ^ 0x6a));
    const auto train_corpus = data::generate_corpus(grammar, config.train_videos,
                                                    config.refs_per_video,
                                                    splitmix64(seed ^ 0x7a), config.corpus);
    const auto test_corpus = data::generate_corpus(grammar, config.test_videos,
                                                   config.refs_per_video,
                                                   splitmix64(seed ^ 0x8a), config.corpus);
    const auto vocab = data::build_vocabulary(grammar);
    for (const auto& removed : config.variants) {
      TrainConfig tc = config.train;
      tc.seed = seed;
      const auto mc = model::ablate(config.model, removed);
      auto result = train(train_corpus, mc, tc, vocab);
      AblationRow row{seed, mc.wiring.describe(),
                      evaluate(result.model, result.vocab, test_corpus).metrics};
      if (progress) progress(row);
      rows.push_back(std::move(row));
    }
  }
  return rows;
}

// --- reports ---

namespace {

void put_losses(std::ostream& os, const std::string& prefix, const LossBreakdown& l) {
  os << prefix << "l_c=" << l.l_c << '\n'
     << prefix << "l_v=" << l.l_v << '\n'
     << prefix << "l_ds=" << l.l_ds << '\n'
     << prefix << "l_a=" << l.l_a << '\n'
     << prefix << "l_do=" << l.l_do << '\n'
     << prefix << "l_g=" << l.l_g << '\n'
     << prefix << "l_noun=" << l.l_noun << '\n'
     << prefix << "l_all=" << l.l_all << '\n';
}

nlohmann::json losses_json(const LossBreakdown& l) {
  return {{"l_c", l.l_c},   {"l_v", l.l_v}, {"l_ds", l.l_ds},     {"l_a", l.l_a},
          {"l_do", l.l_do}, {"l_g", l.l_g}, {"l_noun", l.l_noun}, {"l_all", l.l_all}};
}

nlohmann::json config_json(const RunReport& r) {
  const auto& m = r.model_config;
  const auto& c = r.config;
  return {{"hidden", m.hidden},
          {"embedding", m.embedding},
          {"spatial_dim", m.spatial_dim},
          {"temporal_dim", m.temporal_dim},
          {"noun_dim", m.noun_dim},
          {"vocab_size", m.vocab_size},
          {"max_caption_len", m.max_caption_len},
          {"attention_dim", m.attention_hidden()},
          {"distance", m.distance == model::DistanceKind::kMse ? "mse" : "cosine"},
          {"wiring", m.wiring.describe()},
          {"learning_rate", c.learning_rate},
          {"batch_size", c.batch_size},
          {"epochs", c.epochs},
          {"beta1", c.beta1},
          {"beta2", c.beta2},
          {"epsilon", c.epsilon},
          {"seed", c.seed},
          {"spatial_mask_ratio", c.mask.spatial_ratio},
          {"temporal_mask_ratio", c.mask.temporal_ratio},
          {"clip_norm", c.clip_norm},
          {"val_fraction", c.val_fraction},
          {"train_videos", r.train_videos},
          {"validation_videos", r.validation_videos}};
}

}  // namespace

std::string report_text(const RunReport& r) {
  std::ostringstream os;
  os.precision(std::numeric_limits<double>::max_digits10);
  const nlohmann::json cfg = config_json(r);
  for (const auto& [k, v] : cfg.items()) {
    os << "config." << k << '=' << (v.is_string() ? v.get<std::string>() : v.dump()) << '\n';
  }
  for (const auto& e : r.epochs) {
    const std::string p = "epoch." + std::to_string(e.epoch) + ".";
    put_losses(os, p + "train.", e.train);
    if (e.validation) put_losses(os, p + "val.", *e.validation);
  }
  os << "epochs_run=" << r.epochs.size() << '\n' << "best_epoch=" << r.best_epoch << '\n';
  if (r.final_metrics) {
    std::istringstream lines(metrics::to_text(*r.final_metrics));
    for (std::string line; std::getline(lines, line);) os << "final." << line << '\n';
  }
  os << "wall_seconds=" << r.wall_seconds << '\n';
  return os.str();
}

std::string report_records(const RunReport& r) {
  std::ostringstream os;
  os << nlohmann::json{{"type", "config"}, {"config", config_json(r)}}.dump() << '\n';
  for (const auto& e : r.epochs) {
    nlohmann::json j{{"type", "epoch"}, {"epoch", e.epoch}, {"train", losses_json(e.train)}};
    if (e.validation) j["validation"] = losses_json(*e.validation);
    os << j.dump() << '\n';
  }
  nlohmann::json fin{{"type", "final"},
                     {"epochs_run", r.epochs.size()},
                     {"best_epoch", r.best_epoch},
                     {"wall_seconds", r.wall_seconds}};
  if (r.final_metrics) fin["metrics"] = nlohmann::json::parse(metrics::to_json(*r.final_metrics));
  os << fin.dump() << '\n';
  return os.str();
}

}  // namespace sempos::train
