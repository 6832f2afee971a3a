#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "sempos/autodiff.hpp"
#include "sempos/corpus.hpp"
#include "sempos/layers.hpp"
#include "sempos/masking.hpp"

namespace sempos::model {

using ad::Var;

enum class DistanceKind : std::uint8_t { kMse = 0, kCosine = 1 };

// Removable parts of the network, in pipeline order.
enum class Block : std::uint8_t {
  kVerb = 0,
  kDetSubject = 1,
  kAuxVerb = 2,
  kDetObject = 3,
  kGlfb = 4,
  kVfm = 5,
};
inline constexpr std::size_t kBlockCount = 6;

const char* block_name(Block b);
// Accepts verb, det_subject, aux_verb, det_object, glfb, vfm.
Block parse_block(const std::string& name);  // throws UnknownBlockName

struct Wiring {
  std::array<bool, kBlockCount> enabled{true, true, true, true, true, true};

  bool has(Block b) const { return enabled[static_cast<std::size_t>(b)]; }
  std::uint8_t bits() const;
  static Wiring from_bits(std::uint8_t bits);
  std::string describe() const;  // "full" or "w/o verb+glfb"
  bool operator==(const Wiring&) const = default;
};

struct ModelConfig {
  std::size_t hidden = 64;
  std::size_t embedding = 32;
  std::size_t spatial_dim = 16;
  std::size_t temporal_dim = 16;
  std::size_t noun_dim = 16;
  std::size_t vocab_size = 0;
  std::size_t max_caption_len = 12;
  // 0 means "same as hidden".
  std::size_t attention_dim = 0;
  DistanceKind distance = DistanceKind::kMse;
  Wiring wiring;

  std::size_t attention_hidden() const { return attention_dim ? attention_dim : hidden; }
  void validate() const;  // throws InvalidConfig
  bool operator==(const ModelConfig&) const = default;
};

// Variant with the named blocks removed. Removing a POS block or the GLFB
// zeroes its features and predicted embedding and drops its loss term; without
// the GLFB the caption block attends over the spatial features instead.
// Removing "vfm" disables feature masking.
ModelConfig ablate(const ModelConfig& config, const std::vector<std::string>& blocks_to_remove);

struct BlockOutputs {
  Var n_f, v_f, ds_f, a_f, do_f, g_f;  // T x 2H (n_f: K x 2H)
  Var noun_p, v_p, ds_p, a_p, do_p, g_p;  // 1 x E
};

// The six addends of the overall loss and their sum, plus the nouns-anchor
// share that is folded into l_g.
struct LossBreakdown {
  double l_c = 0, l_v = 0, l_ds = 0, l_a = 0, l_do = 0, l_g = 0;
  double l_all = 0;
  double l_noun = 0;  // included in l_g

  static LossBreakdown zero() { return {}; }
  LossBreakdown& operator+=(const LossBreakdown& o);
  LossBreakdown scaled(double f) const;
};

// Equal-sum combination; terms whose flag is false contribute exactly zero.
// Order: c, v, ds, a, do, g.
LossBreakdown total_loss(const std::array<double, 6>& terms, const std::array<bool, 6>& present);

struct LossWeights {
  double caption = 1.0, verb = 1.0, det_subject = 1.0, aux_verb = 1.0, det_object = 1.0,
         glfb = 1.0, noun = 1.0;
};

Var embedding_distance(const Var& prediction, const Var& target, DistanceKind kind);
// Sum over steps of -log P_n(w_n).
Var caption_cross_entropy(const Var& logits, std::span<const std::size_t> targets);

enum class Mode { kTrain, kEval };

struct FeatureView {
  const Tensor& spatial;
  const Tensor& temporal;
  const Tensor& objects;
};
FeatureView view(const data::VideoSample& sample);

struct ForwardOptions {
  Mode mode = Mode::kEval;
  vfm::MaskConfig mask;
  // Required in train mode when masking is active.
  Rng* mask_rng = nullptr;
  LossWeights weights;
};

struct ForwardResult {
  LossBreakdown losses;
  Var total;   // scalar l_all, differentiable
  BlockOutputs blocks;
  Var logits;  // (N + 1) x V, teacher forced
};

struct DecoderContext {
  nn::AttentionKeys keys;  // over g_f, or s_f without the GLFB
  Var pos_embeddings;      // 1 x 5E: v_p, ds_p, a_p, do_p, g_p
};

struct StepOutput {
  Var logits;  // 1 x V
  nn::LstmState state;
};

class SemPosModel {
 public:
  SemPosModel(ModelConfig config, std::uint64_t init_seed);

  const ModelConfig& config() const { return config_; }
  nn::ParameterSet& parameters() { return params_; }
  const nn::ParameterSet& parameters() const { return params_; }

  Var nouns_anchor(const Var& objects, Var* noun_prediction = nullptr) const;
  // Each returns (features, predicted embedding).
  std::pair<Var, Var> verb_block(const Var& t_f, const Var& n_f) const;
  std::pair<Var, Var> det_subject_block(const Var& s_f, const Var& v_f, const Var& n_f) const;
  std::pair<Var, Var> aux_verb_block(const Var& t_f, const Var& n_f, const Var& v_f,
                                     const Var& ds_f) const;
  std::pair<Var, Var> det_object_block(const Var& s_f, const Var& n_f, const Var& v_f,
                                       const Var& ds_f, const Var& a_f) const;
  std::pair<Var, Var> glfb(const Var& s_f, const Var& n_f, const Var& v_f, const Var& ds_f,
                           const Var& a_f, const Var& do_f) const;

  // Runs the encoder in the fixed order Verb, Det+Subject, Aux Verb,
  // Det+Object, GLFB on already-masked inputs.
  BlockOutputs encode(const Var& s_f, const Var& t_f, const Var& objects) const;

  DecoderContext decoder_context(const BlockOutputs& blocks, const Var& s_f) const;
  StepOutput caption_step(std::size_t prev_token, const nn::LstmState& state,
                          const DecoderContext& context) const;

  // `caption` holds the reference token ids without <bos>/<eos>.
  ForwardResult forward(const FeatureView& video, const data::POSGroundTruth& truth,
                        std::span<const std::size_t> caption,
                        const ForwardOptions& options) const;

  // Argmax decoding (ties to the lowest id), stopping at <eos> or max_len.
  std::vector<std::size_t> decode_greedy(const FeatureView& video,
                                         std::optional<std::size_t> max_len = {}) const;

  std::vector<Tensor> snapshot() const;
  void restore(const std::vector<Tensor>& values);

 private:
  struct PosBlockParams {
    nn::BiLstmParams lstm;
    // One attention per source; nullopt when that source block is removed.
    std::vector<std::optional<nn::AttentionParams>> attentions;
    nn::FcParams head;
  };

  std::pair<Var, Var> run_block(const PosBlockParams& block, const Var& primary,
                                std::span<const Var> sources) const;
  Var zero_features(std::size_t steps) const;
  Var zero_embedding() const;

  ModelConfig config_;
  nn::ParameterSet params_;
  nn::FcParams anchor_proj_, anchor_head_;
  std::optional<PosBlockParams> verb_, det_subject_, aux_verb_, det_object_, glfb_;
  Var word_embedding_;
  nn::AttentionParams caption_attention_;
  nn::LstmParams caption_lstm_;
  nn::FcParams caption_out_;
};

// Checkpoint layout (little-endian):
//   "SEMP" | u16 version | ModelConfig | vocabulary | u32 n_params
//   per parameter: u32 name_len | name | u32 rank | u32 dims[rank] | f64 payload
inline constexpr std::uint16_t kCheckpointVersion = 1;

struct Checkpoint {
  ModelConfig config;
  data::Vocabulary vocab;
  std::vector<std::pair<std::string, Tensor>> params;
};

void save_checkpoint(const std::string& path, const SemPosModel& model,
                     const data::Vocabulary& vocab);
Checkpoint load_checkpoint(const std::string& path);
SemPosModel model_from_checkpoint(const Checkpoint& ckpt);

}  // namespace sempos::model
