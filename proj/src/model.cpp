#include "sempos/model.hpp"

#include <algorithm>
#include <fstream>

#include "binary_io.hpp"
#include "sempos/errors.hpp"

namespace sempos::model {

namespace {

constexpr std::array<const char*, kBlockCount> kBlockNames = {
    "verb", "det_subject", "aux_verb", "det_object", "glfb", "vfm"};

}  // namespace

const char* block_name(Block b) { return kBlockNames[static_cast<std::size_t>(b)]; }

Block parse_block(const std::string& name) {
  const std::string key = data::to_lower(name);
  for (std::size_t i = 0; i < kBlockCount; ++i) {
    if (key == kBlockNames[i]) return static_cast<Block>(i);
  }
  throw UnknownBlockName("unknown block '" + name +
                         "' (expected verb, det_subject, aux_verb, det_object, glfb, vfm)");
}

std::uint8_t Wiring::bits() const {
  std::uint8_t b = 0;
  for (std::size_t i = 0; i < kBlockCount; ++i) b |= enabled[i] ? (1u << i) : 0u;
  return b;
}

Wiring Wiring::from_bits(std::uint8_t bits) {
  Wiring w;
  for (std::size_t i = 0; i < kBlockCount; ++i) w.enabled[i] = (bits >> i) & 1u;
  return w;
}

std::string Wiring::describe() const {
  std::string removed;
  for (std::size_t i = 0; i < kBlockCount; ++i) {
    if (enabled[i]) continue;
    if (!removed.empty()) removed += '+';
    removed += kBlockNames[i];
  }
  return removed.empty() ? "full" : "w/o " + removed;
}

void ModelConfig::validate() const {
  if (hidden == 0 || embedding == 0 || spatial_dim == 0 || temporal_dim == 0 ||
      noun_dim == 0 || max_caption_len == 0) {
    throw InvalidConfig("model dimensions must be positive");
  }
  if (vocab_size < 3) throw InvalidConfig("vocabulary needs <bos>, <eos> and a word");
}

ModelConfig ablate(const ModelConfig& config, const std::vector<std::string>& blocks_to_remove) {
  ModelConfig out = config;
  for (const auto& name : blocks_to_remove) {
    out.wiring.enabled[static_cast<std::size_t>(parse_block(name))] = false;
  }
  return out;
}

LossBreakdown& LossBreakdown::operator+=(const LossBreakdown& o) {
  l_c += o.l_c;
  l_v += o.l_v;
  l_ds += o.l_ds;
  l_a += o.l_a;
  l_do += o.l_do;
  l_g += o.l_g;
  l_all += o.l_all;
  l_noun += o.l_noun;
  return *this;
}

LossBreakdown LossBreakdown::scaled(double f) const {
  return {l_c * f, l_v * f, l_ds * f, l_a * f, l_do * f, l_g * f, l_all * f, l_noun * f};
}

LossBreakdown total_loss(const std::array<double, 6>& terms, const std::array<bool, 6>& present) {
  std::array<double, 6> t{};
  for (std::size_t i = 0; i < 6; ++i) {
    if (present[i] && terms[i] < 0.0) throw InvalidConfig("loss terms must be nonnegative");
    t[i] = present[i] ? terms[i] : 0.0;
  }
  LossBreakdown b;
  b.l_c = t[0];
  b.l_v = t[1];
  b.l_ds = t[2];
  b.l_a = t[3];
  b.l_do = t[4];
  b.l_g = t[5];
  b.l_all = b.l_c + b.l_v + b.l_ds + b.l_a + b.l_do + b.l_g;
  return b;
}

Var embedding_distance(const Var& prediction, const Var& target, DistanceKind kind) {
  if (prediction->value.size() != target->value.size()) {
    throw DimensionMismatch("embedding_distance: " + shape_string(prediction->shape()) +
                            " vs " + shape_string(target->shape()));
  }
  return kind == DistanceKind::kMse ? ad::mse(prediction, target)
                                    : ad::cosine_distance(prediction, target);
}

Var caption_cross_entropy(const Var& logits, std::span<const std::size_t> targets) {
  return ad::cross_entropy(logits, targets);
}

FeatureView view(const data::VideoSample& sample) {
  return {sample.spatial, sample.temporal, sample.objects};
}

// --- construction ---

SemPosModel::SemPosModel(ModelConfig config, std::uint64_t init_seed)
    : config_(std::move(config)) {
  config_.validate();
  Rng rng(init_seed);
  const std::size_t H = config_.hidden, E = config_.embedding, A = config_.attention_hidden();
  const std::size_t F = 2 * H;
  const Wiring& w = config_.wiring;

  anchor_proj_ = nn::make_fc(params_, "anchor.proj", config_.noun_dim, F, rng);
  anchor_head_ = nn::make_fc(params_, "anchor.head", F, E, rng);

  // Sources per block follow the operand order of each block's concatenation.
  struct Source {
    const char* name;
    bool active;
  };
  auto make_block = [&](const char* prefix, std::size_t primary_dim,
                        std::initializer_list<Source> sources) {
    PosBlockParams b;
    const std::string p = prefix;
    for (const auto& s : sources) {
      if (s.active) {
        b.attentions.push_back(
            nn::make_attention(params_, p + ".att_" + s.name, primary_dim, F, A, rng));
      } else {
        b.attentions.push_back(std::nullopt);
      }
    }
    b.lstm = nn::make_bilstm(params_, p + ".lstm", primary_dim + F * sources.size(), H, rng);
    b.head = nn::make_fc(params_, p + ".head", F, E, rng);
    return b;
  };

  const bool v = w.has(Block::kVerb), ds = w.has(Block::kDetSubject),
             a = w.has(Block::kAuxVerb), dobj = w.has(Block::kDetObject);
  const std::size_t Ds = config_.spatial_dim, Dt = config_.temporal_dim;
  if (v) verb_ = make_block("verb", Dt, {{"n", true}});
  if (ds) det_subject_ = make_block("det_subject", Ds, {{"v", v}, {"n", true}});
  if (a) aux_verb_ = make_block("aux_verb", Dt, {{"v", v}, {"n", true}, {"ds", ds}});
  if (dobj) {
    det_object_ = make_block("det_object", Ds, {{"v", v}, {"n", true}, {"ds", ds}, {"a", a}});
  }
  if (w.has(Block::kGlfb)) {
    glfb_ = make_block("glfb", Ds,
                       {{"v", v}, {"n", true}, {"ds", ds}, {"a", a}, {"do", dobj}});
  }

  const std::size_t V = config_.vocab_size;
  const std::size_t att_values = glfb_ ? F : Ds;
  word_embedding_ = params_.uniform("caption.embedding", {V, E}, E, rng);
  caption_attention_ = nn::make_attention(params_, "caption.att", E, att_values, A, rng);
  caption_lstm_ = nn::make_lstm(params_, "caption.lstm", E + att_values + 5 * E, H, rng);
  caption_out_ = nn::make_fc(params_, "caption.out", H, V, rng);
}

Var SemPosModel::zero_features(std::size_t steps) const {
  return ad::constant(Tensor({steps, 2 * config_.hidden}));
}

Var SemPosModel::zero_embedding() const {
  return ad::constant(Tensor({1, config_.embedding}));
}

// --- blocks ---

std::pair<Var, Var> SemPosModel::run_block(const PosBlockParams& block, const Var& primary,
                                           std::span<const Var> sources) const {
  if (primary->value.rank() != 2) {
    throw DimensionMismatch("block input must be T x D, got " + shape_string(primary->shape()));
  }
  if (sources.size() != block.attentions.size()) {
    throw DimensionMismatch("block expects " + std::to_string(block.attentions.size()) +
                            " attended sources, got " + std::to_string(sources.size()));
  }
  const std::size_t steps = primary->shape()[0];
  const Var context = ad::mean_rows(primary);
  std::vector<Var> parts{primary};
  for (std::size_t i = 0; i < sources.size(); ++i) {
    if (block.attentions[i]) {
      const auto att = nn::additive_attention(context, sources[i], *block.attentions[i]);
      parts.push_back(ad::repeat_rows(att.attended, steps));
    } else {
      parts.push_back(zero_features(steps));
    }
  }
  Var f = nn::lstm_bidirectional(ad::concat(parts, 1), block.lstm);
  Var p = nn::fully_connected(ad::mean_rows(f), block.head);
  return {f, p};
}

Var SemPosModel::nouns_anchor(const Var& objects, Var* noun_prediction) const {
  if (objects->value.rank() != 2 || objects->shape()[0] == 0) {
    throw DimensionMismatch("nouns anchor expects K x D_n object features");
  }
  Var n_f = ad::tanh(nn::fully_connected(objects, anchor_proj_));
  if (noun_prediction) *noun_prediction = nn::fully_connected(ad::mean_rows(n_f), anchor_head_);
  return n_f;
}

std::pair<Var, Var> SemPosModel::verb_block(const Var& t_f, const Var& n_f) const {
  if (!verb_) throw InvalidConfig("verb block is removed in this wiring");
  const Var src[] = {n_f};
  return run_block(*verb_, t_f, src);
}

std::pair<Var, Var> SemPosModel::det_subject_block(const Var& s_f, const Var& v_f,
                                                   const Var& n_f) const {
  if (!det_subject_) throw InvalidConfig("det_subject block is removed in this wiring");
  const Var src[] = {v_f, n_f};
  return run_block(*det_subject_, s_f, src);
}

std::pair<Var, Var> SemPosModel::aux_verb_block(const Var& t_f, const Var& n_f, const Var& v_f,
                                                const Var& ds_f) const {
  if (!aux_verb_) throw InvalidConfig("aux_verb block is removed in this wiring");
  const Var src[] = {v_f, n_f, ds_f};
  return run_block(*aux_verb_, t_f, src);
}

std::pair<Var, Var> SemPosModel::det_object_block(const Var& s_f, const Var& n_f,
                                                  const Var& v_f, const Var& ds_f,
                                                  const Var& a_f) const {
  if (!det_object_) throw InvalidConfig("det_object block is removed in this wiring");
  const Var src[] = {v_f, n_f, ds_f, a_f};
  return run_block(*det_object_, s_f, src);
}

std::pair<Var, Var> SemPosModel::glfb(const Var& s_f, const Var& n_f, const Var& v_f,
                                      const Var& ds_f, const Var& a_f, const Var& do_f) const {
  if (!glfb_) throw InvalidConfig("glfb is removed in this wiring");
  const Var src[] = {v_f, n_f, ds_f, a_f, do_f};
  return run_block(*glfb_, s_f, src);
}

BlockOutputs SemPosModel::encode(const Var& s_f, const Var& t_f, const Var& objects) const {
  if (s_f->value.rank() != 2 || s_f->shape()[1] != config_.spatial_dim) {
    throw DimensionMismatch("spatial features " + shape_string(s_f->shape()) +
                            " do not match D_s=" + std::to_string(config_.spatial_dim));
  }
  if (t_f->value.rank() != 2 || t_f->shape()[1] != config_.temporal_dim) {
    throw DimensionMismatch("temporal features " + shape_string(t_f->shape()) +
                            " do not match D_t=" + std::to_string(config_.temporal_dim));
  }
  if (objects->value.rank() != 2 || objects->shape()[1] != config_.noun_dim) {
    throw DimensionMismatch("object features " + shape_string(objects->shape()) +
                            " do not match D_n=" + std::to_string(config_.noun_dim));
  }
  BlockOutputs out;
  out.n_f = nouns_anchor(objects, &out.noun_p);

  auto fill = [&](bool on, auto&& run, Var& f, Var& p, std::size_t steps) {
    if (on) {
      std::tie(f, p) = run();
    } else {
      f = zero_features(steps);
      p = zero_embedding();
    }
  };
  const std::size_t Ts = s_f->shape()[0], Tt = t_f->shape()[0];
  fill(verb_.has_value(), [&] { return verb_block(t_f, out.n_f); }, out.v_f, out.v_p, Tt);
  fill(det_subject_.has_value(), [&] { return det_subject_block(s_f, out.v_f, out.n_f); },
       out.ds_f, out.ds_p, Ts);
  fill(aux_verb_.has_value(), [&] { return aux_verb_block(t_f, out.n_f, out.v_f, out.ds_f); },
       out.a_f, out.a_p, Tt);
  fill(det_object_.has_value(),
       [&] { return det_object_block(s_f, out.n_f, out.v_f, out.ds_f, out.a_f); }, out.do_f,
       out.do_p, Ts);
  fill(glfb_.has_value(),
       [&] { return glfb(s_f, out.n_f, out.v_f, out.ds_f, out.a_f, out.do_f); }, out.g_f,
       out.g_p, Ts);
  return out;
}

// --- caption block ---

DecoderContext SemPosModel::decoder_context(const BlockOutputs& blocks, const Var& s_f) const {
  DecoderContext ctx;
  ctx.keys = nn::attention_keys(glfb_ ? blocks.g_f : s_f, caption_attention_);
  ctx.pos_embeddings =
      ad::concat({blocks.v_p, blocks.ds_p, blocks.a_p, blocks.do_p, blocks.g_p}, 1);
  return ctx;
}

StepOutput SemPosModel::caption_step(std::size_t prev_token, const nn::LstmState& state,
                                     const DecoderContext& context) const {
  if (prev_token >= config_.vocab_size) {
    throw OutOfVocabulary("token id " + std::to_string(prev_token) + " outside a vocabulary of " +
                          std::to_string(config_.vocab_size));
  }
  // The previous word is the attention query for the caption block.
  Var word = nn::embed_word(prev_token, word_embedding_);
  Var attended = nn::attend(word, context.keys, caption_attention_).attended;
  Var input = ad::concat({word, attended, context.pos_embeddings}, 1);
  nn::LstmState next = nn::lstm_step(input, state, caption_lstm_);
  return {nn::fully_connected(next.h, caption_out_), next};
}

ForwardResult SemPosModel::forward(const FeatureView& video, const data::POSGroundTruth& truth,
                                   std::span<const std::size_t> caption,
                                   const ForwardOptions& options) const {
  Var s_f, t_f;
  const bool masking = options.mode == Mode::kTrain && config_.wiring.has(Block::kVfm) &&
                       (options.mask.spatial_ratio > 0.0 || options.mask.temporal_ratio > 0.0);
  if (masking) {
    if (!options.mask_rng) throw InvalidConfig("train-mode masking needs a mask RNG");
    s_f = ad::constant(vfm::mask_spatial(video.spatial, options.mask, *options.mask_rng).masked);
    t_f = ad::constant(
        vfm::mask_temporal_chunk(video.temporal, options.mask, *options.mask_rng).masked);
  } else {
    s_f = ad::constant(video.spatial);
    t_f = ad::constant(video.temporal);
  }

  ForwardResult result;
  result.blocks = encode(s_f, t_f, ad::constant(video.objects));
  const BlockOutputs& b = result.blocks;
  const DecoderContext ctx = decoder_context(b, s_f);

  std::vector<std::size_t> targets(caption.begin(), caption.end());
  targets.push_back(data::kEosId);
  std::vector<Var> rows;
  rows.reserve(targets.size());
  nn::LstmState state;
  std::size_t prev = data::kBosId;
  for (std::size_t n = 0; n < targets.size(); ++n) {
    auto step = caption_step(prev, state, ctx);
    rows.push_back(step.logits);
    state = step.state;
    prev = targets[n];
  }
  result.logits = ad::concat(rows, 0);

  const LossWeights& w = options.weights;
  const DistanceKind kind = config_.distance;
  Var l_c = ad::scale(caption_cross_entropy(result.logits, targets), w.caption);

  struct Term {
    Var loss;
    bool present;
  };
  auto pos_term = [&](bool block_on, data::PosComponent k, const Var& pred, double weight) {
    if (!block_on || !truth.present[k]) return Term{nullptr, false};
    return Term{ad::scale(embedding_distance(pred, ad::constant(truth.embedding[k]), kind), weight),
                true};
  };
  const Term t_v = pos_term(verb_.has_value(), data::kVerb, b.v_p, w.verb);
  const Term t_ds = pos_term(det_subject_.has_value(), data::kDetSubject, b.ds_p, w.det_subject);
  const Term t_a = pos_term(aux_verb_.has_value(), data::kAuxVerb, b.a_p, w.aux_verb);
  const Term t_do = pos_term(det_object_.has_value(), data::kDetObject, b.do_p, w.det_object);

  Var l_noun;
  if (truth.has_nouns) {
    l_noun = ad::scale(embedding_distance(b.noun_p, ad::constant(truth.noun_embedding), kind),
                       w.noun);
  }
  Var l_g;
  if (glfb_) {
    l_g = ad::scale(embedding_distance(b.g_p, ad::constant(truth.caption_embedding), kind),
                    w.glfb);
    if (l_noun) l_g = ad::add(l_g, l_noun);
  } else {
    l_g = l_noun;
  }
  const Term t_g{l_g, static_cast<bool>(l_g)};

  const Term terms[] = {{l_c, true}, t_v, t_ds, t_a, t_do, t_g};
  std::array<double, 6> values{};
  std::array<bool, 6> present{};
  Var total;
  for (std::size_t i = 0; i < 6; ++i) {
    present[i] = terms[i].present;
    if (!terms[i].present) continue;
    values[i] = ad::scalar(terms[i].loss);
    total = total ? ad::add(total, terms[i].loss) : terms[i].loss;
  }
  result.total = total;
  result.losses = total_loss(values, present);
  result.losses.l_noun = l_noun ? ad::scalar(l_noun) : 0.0;
  return result;
}

std::vector<std::size_t> SemPosModel::decode_greedy(const FeatureView& video,
                                                    std::optional<std::size_t> max_len) const {
  ad::NoGradGuard no_grad;
  const std::size_t limit = max_len.value_or(config_.max_caption_len);
  Var s_f = ad::constant(video.spatial);
  const BlockOutputs blocks =
      encode(s_f, ad::constant(video.temporal), ad::constant(video.objects));
  const DecoderContext ctx = decoder_context(blocks, s_f);
  std::vector<std::size_t> out;
  nn::LstmState state;
  std::size_t prev = data::kBosId;
  while (out.size() < limit) {
    auto step = caption_step(prev, state, ctx);
    state = step.state;
    const auto& z = step.logits->value;
    std::size_t best = 0;
    for (std::size_t j = 1; j < z.size(); ++j) {
      if (z[j] > z[best]) best = j;
    }
    if (best == data::kEosId) break;
    out.push_back(best);
    prev = best;
  }
  return out;
}

std::vector<Tensor> SemPosModel::snapshot() const {
  std::vector<Tensor> out;
  for (const auto& e : params_.entries()) out.push_back(e.var->value);
  return out;
}

void SemPosModel::restore(const std::vector<Tensor>& values) {
  const auto& entries = params_.entries();
  if (values.size() != entries.size()) throw DimensionMismatch("restore: parameter count");
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (values[i].shape() != entries[i].var->value.shape()) {
      throw DimensionMismatch("restore: shape of " + entries[i].name);
    }
    entries[i].var->value = values[i];
  }
}

// --- checkpoint ---

namespace {

constexpr char kMagic[4] = {'S', 'E', 'M', 'P'};

}  // namespace

void save_checkpoint(const std::string& path, const SemPosModel& model,
                     const data::Vocabulary& vocab) {
  const ModelConfig& c = model.config();
  if (vocab.size() != c.vocab_size) {
    throw DimensionMismatch("vocabulary size disagrees with the model config");
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw CorruptFile("cannot write checkpoint " + path);
  detail::LeWriter w(out);
  w.bytes(kMagic, 4);
  w.u16(kCheckpointVersion);
  for (std::size_t v : {c.hidden, c.embedding, c.spatial_dim, c.temporal_dim, c.noun_dim,
                        c.vocab_size, c.max_caption_len, c.attention_dim}) {
    w.u32(static_cast<std::uint32_t>(v));
  }
  w.u8(static_cast<std::uint8_t>(c.distance));
  w.u8(c.wiring.bits());
  w.u32(static_cast<std::uint32_t>(vocab.size()));
  for (const auto& t : vocab.tokens()) w.str(t);
  const auto& entries = model.parameters().entries();
  w.u32(static_cast<std::uint32_t>(entries.size()));
  for (const auto& e : entries) {
    w.str(e.name);
    const Tensor& t = e.var->value;
    w.u32(static_cast<std::uint32_t>(t.rank()));
    for (auto d : t.shape()) w.u32(static_cast<std::uint32_t>(d));
    for (double v : t.values()) w.f64(v);
  }
  if (!out) throw CorruptFile("write failed for " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CorruptFile("cannot open checkpoint " + path);
  detail::LeReader r(in, path);
  char magic[4];
  r.bytes(magic, 4);
  if (std::memcmp(magic, kMagic, 4) != 0) throw CorruptFile(path + ": bad magic");
  const auto version = r.u16();
  if (version != kCheckpointVersion) {
    throw VersionMismatch(path + ": checkpoint version " + std::to_string(version) +
                          ", expected " + std::to_string(kCheckpointVersion));
  }
  Checkpoint ck;
  ModelConfig& c = ck.config;
  for (std::size_t* f : {&c.hidden, &c.embedding, &c.spatial_dim, &c.temporal_dim,
                         &c.noun_dim, &c.vocab_size, &c.max_caption_len, &c.attention_dim}) {
    *f = r.u32();
  }
  const auto distance = r.u8();
  if (distance > 1) throw CorruptFile(path + ": unknown distance kind");
  c.distance = static_cast<DistanceKind>(distance);
  c.wiring = Wiring::from_bits(r.u8());
  const auto n_tokens = r.u32();
  std::vector<std::string> tokens;
  for (std::uint32_t i = 0; i < n_tokens; ++i) tokens.push_back(r.str());
  if (tokens.size() < 2 || tokens[0] != "<bos>" || tokens[1] != "<eos>") {
    throw CorruptFile(path + ": vocabulary lacks reserved tokens");
  }
  ck.vocab = data::Vocabulary(std::vector<std::string>(tokens.begin() + 2, tokens.end()));
  if (ck.vocab.size() != c.vocab_size) throw CorruptFile(path + ": vocabulary size mismatch");
  const auto n_params = r.u32();
  for (std::uint32_t i = 0; i < n_params; ++i) {
    std::string name = r.str();
    const auto rank = r.u32();
    if (rank < 1 || rank > 3) throw CorruptFile(path + ": invalid rank for " + name);
    Shape shape(rank);
    std::size_t n = 1;
    for (auto& d : shape) {
      d = r.u32();
      n *= d;
      if (n > (std::size_t{1} << 31)) throw CorruptFile(path + ": implausible tensor size");
    }
    std::vector<double> data(n);
    for (auto& v : data) v = r.f64();
    ck.params.emplace_back(std::move(name), Tensor(std::move(shape), std::move(data)));
  }
  if (!r.at_end()) throw CorruptFile(path + ": trailing bytes");
  return ck;
}

SemPosModel model_from_checkpoint(const Checkpoint& ckpt) {
  SemPosModel model(ckpt.config, 0);
  const auto& entries = model.parameters().entries();
  if (entries.size() != ckpt.params.size()) {
    throw CorruptFile("checkpoint parameter count does not match its config");
  }
  for (std::size_t i = 0; i < entries.size(); ++i) {
    const auto& [name, value] = ckpt.params[i];
    if (name != entries[i].name || value.shape() != entries[i].var->value.shape()) {
      throw CorruptFile("checkpoint parameter " + name + " does not match its config");
    }
    entries[i].var->value = value;
  }
  return model;
}

}  // namespace sempos::model
