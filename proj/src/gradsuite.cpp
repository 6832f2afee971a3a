#include "sempos/gradsuite.hpp"

#include <functional>

#include "sempos/autodiff.hpp"
#include "sempos/corpus.hpp"
#include "sempos/embedding.hpp"
#include "sempos/layers.hpp"
#include "sempos/model.hpp"

namespace sempos::check {

namespace {

using ad::Var;

Tensor random_tensor(Shape shape, Rng& rng, double scale = 0.5) {
  Tensor t(std::move(shape));
  for (double& v : t.values()) v = scale * rng.normal();
  return t;
}

// Projects onto a fixed random direction so no gradient coordinate cancels by symmetry.
Var probe_sum(const Var& x, const Tensor& direction) {
  return ad::sum(ad::mul(x, ad::constant(direction)));
}

GradCheckResult check(const std::string& name, const std::function<Var()>& f,
                      const std::vector<Var>& params, std::size_t coords, std::uint64_t seed) {
  std::size_t n = 0;
  for (const auto& p : params) n += p->value.size();
  ad::GradCheckOptions opts;
  opts.max_coords_per_tensor = coords;
  opts.seed = seed;
  return {name, ad::grad_check(f, params, opts), n};
}

void layer_checks(const SuiteOptions& o, std::vector<GradCheckResult>& out) {
  Rng rng = Rng(o.seed).substream("layers");
  const std::size_t T = o.frames, H = o.hidden, D = o.feature_dim, A = o.hidden;

  {
    nn::ParameterSet ps;
    auto fc = nn::make_fc(ps, "fc", D, H, rng);
    auto x = ad::parameter(random_tensor({T, D}, rng));
    const Tensor dir = random_tensor({T, H}, rng);
    auto params = ps.vars();
    params.push_back(x);
    out.push_back(check("fully_connected", [&] { return probe_sum(nn::fully_connected(x, fc), dir); },
                        params, 0, o.seed));
  }
  for (auto kind : {ad::Activation::kTanh, ad::Activation::kSigmoid, ad::Activation::kSoftmax}) {
    auto x = ad::parameter(random_tensor({T, D}, rng, 1.0));
    const Tensor dir = random_tensor({T, D}, rng);
    const char* name = kind == ad::Activation::kTanh      ? "tanh"
                       : kind == ad::Activation::kSigmoid ? "sigmoid"
                                                          : "softmax";
    out.push_back(check(name, [&] { return probe_sum(ad::activation(x, kind), dir); }, {x}, 0,
                        o.seed));
  }
  for (bool reverse : {false, true}) {
    nn::ParameterSet ps;
    auto lstm = nn::make_lstm(ps, "lstm", D, H, rng);
    auto x = ad::parameter(random_tensor({T, D}, rng));
    const Tensor dir = random_tensor({T, H}, rng);
    auto params = ps.vars();
    params.push_back(x);
    out.push_back(check(reverse ? "lstm_reverse" : "lstm_forward",
                        [&] { return probe_sum(nn::lstm_sequence(x, lstm, reverse), dir); }, params,
                        0, o.seed));
  }
  {
    nn::ParameterSet ps;
    auto bi = nn::make_bilstm(ps, "bilstm", D, H, rng);
    auto x = ad::parameter(random_tensor({T, D}, rng));
    const Tensor dir = random_tensor({T, 2 * H}, rng);
    auto params = ps.vars();
    params.push_back(x);
    out.push_back(check("bilstm", [&] { return probe_sum(nn::lstm_bidirectional(x, bi), dir); },
                        params, 0, o.seed));
  }
  {
    nn::ParameterSet ps;
    auto att = nn::make_attention(ps, "att", D, 2 * H, A, rng);
    auto ctx = ad::parameter(random_tensor({T, D}, rng));
    auto y = ad::parameter(random_tensor({T + 1, 2 * H}, rng));
    const Tensor dir_w = random_tensor({1, T + 1}, rng);
    const Tensor dir_a = random_tensor({1, 2 * H}, rng);
    auto params = ps.vars();
    params.push_back(ctx);
    params.push_back(y);
    out.push_back(check("additive_attention",
                        [&] {
                          auto r = nn::additive_attention(ctx, y, att);
                          return ad::add(probe_sum(r.weights, dir_w), probe_sum(r.attended, dir_a));
                        },
                        params, 0, o.seed));
  }
  {
    auto table = ad::parameter(random_tensor({5, D}, rng));
    auto x = ad::parameter(random_tensor({T, D}, rng));
    const Tensor dir = random_tensor({2 * T, 2 * D}, rng);
    out.push_back(check("structure",
                        [&] {
                          auto e = ad::repeat_rows(nn::embed_word(3, table), T);
                          auto left = ad::concat({x, e}, 1);
                          auto right = ad::concat({ad::slice_rows(left, 1, T - 1),
                                                   ad::mean_rows(left)}, 0);
                          return probe_sum(ad::concat({left, right}, 0), dir);
                        },
                        {table, x}, 0, o.seed));
  }
  {
    auto logits = ad::parameter(random_tensor({T, 6}, rng, 1.0));
    std::vector<std::size_t> targets;
    for (std::size_t t = 0; t < T; ++t) targets.push_back(rng.uniform_index(6));
    out.push_back(check("cross_entropy", [&] { return ad::cross_entropy(logits, targets); },
                        {logits}, 0, o.seed));
  }
  {
    auto a = ad::parameter(random_tensor({1, D}, rng));
    auto b = ad::parameter(random_tensor({1, D}, rng));
    out.push_back(check("mse", [&] { return ad::mse(a, b); }, {a, b}, 0, o.seed));
    out.push_back(check("cosine_distance", [&] { return ad::cosine_distance(a, b); }, {a, b}, 0,
                        o.seed));
  }
}

void model_checks(const SuiteOptions& o, std::vector<GradCheckResult>& out) {
  const auto grammar = data::default_grammar(o.feature_dim, 0.1, o.seed);
  data::CorpusOptions copts;
  copts.frames = o.frames;
  copts.objects = o.objects;
  const auto corpus = data::generate_corpus(grammar, 1, 1, o.seed, copts);
  const auto& sample = corpus.front();
  const auto vocab = data::build_vocabulary(corpus);
  const data::PseudoEmbedder embedder(o.embedding, o.seed);
  const auto truth = data::extract_pos_targets(sample.references.front(), embedder);
  // A short prefix keeps the decoder unroll within the toy budget.
  auto ids = vocab.encode(sample.references.front().tokens);
  ids.resize(std::min<std::size_t>(ids.size(), 3));

  model::ModelConfig base;
  base.hidden = o.hidden;
  base.embedding = o.embedding;
  base.spatial_dim = base.temporal_dim = base.noun_dim = o.feature_dim;
  base.vocab_size = vocab.size();

  struct Variant {
    std::string name;
    std::vector<std::string> removed;
    model::DistanceKind distance = model::DistanceKind::kMse;
  };
  const std::vector<Variant> variants = {
      {"model_full", {}},
      {"model_full_cosine", {}, model::DistanceKind::kCosine},
      {"model_without_det_subject", {"det_subject"}},
      {"model_without_verb", {"verb"}},
      {"model_without_aux_verb", {"aux_verb"}},
      {"model_without_det_object", {"det_object"}},
      {"model_without_glfb", {"glfb"}},
      {"model_without_vfm", {"vfm"}},
  };
  for (const auto& v : variants) {
    auto cfg = model::ablate(base, v.removed);
    cfg.distance = v.distance;
    model::SemPosModel net(cfg, o.seed);
    const auto params = net.parameters().vars();
    auto f = [&] {
      Rng mask_rng(o.seed ^ 0x3a5c);
      model::ForwardOptions opts;
      opts.mode = model::Mode::kTrain;
      opts.mask_rng = &mask_rng;
      return net.forward(model::view(sample), truth, ids, opts).total;
    };
    out.push_back(check(v.name, f, params, o.coords_per_tensor, o.seed));
  }
}

}  // namespace

std::vector<GradCheckResult> run_gradient_suite(const SuiteOptions& options) {
  std::vector<GradCheckResult> out;
  layer_checks(options, out);
  model_checks(options, out);
  return out;
}

}  // namespace sempos::check
