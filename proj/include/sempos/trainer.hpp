#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "sempos/corpus.hpp"
#include "sempos/embedding.hpp"
#include "sempos/feature_io.hpp"
#include "sempos/masking.hpp"
#include "sempos/metrics.hpp"
#include "sempos/model.hpp"

namespace sempos::train {

using ad::Var;

struct AdamConfig {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

struct AdamState {
  std::size_t step = 0;
  std::vector<Tensor> m, v;  // lazily sized on the first step
};

// In-place Adam with bias correction. Throws DimensionMismatch when shapes of
// params, grads and existing moments disagree.
void adam_step(std::vector<Tensor>& params, const std::vector<Tensor>& grads, AdamState& state,
               const AdamConfig& cfg);
// Same update applied to parameter leaves using their accumulated gradients.
void adam_step(std::span<const Var> params, AdamState& state, const AdamConfig& cfg);

// Rescales leaf gradients so their global L2 norm is at most `max_norm`.
// Returns the norm before clipping.
double clip_grad_norm(std::span<const Var> params, double max_norm);

struct TrainConfig {
  double learning_rate = 1e-3;
  std::size_t batch_size = 16;
  std::size_t epochs = 300;
  double beta1 = 0.9, beta2 = 0.999, epsilon = 1e-8;
  std::uint64_t seed = 42;
  vfm::MaskConfig mask;
  model::LossWeights weights;
  double clip_norm = 5.0;  // <= 0 disables clipping
  double val_fraction = 0.1;
  std::size_t embed_seed = 7;  // pseudo-embedding seed for POS targets

  AdamConfig adam() const { return {learning_rate, beta1, beta2, epsilon}; }
  // Throws InvalidConfig unless lr >= 0, batch >= 1 and val_fraction in [0, 1).
  void validate() const;
};

// Whether a video falls in the validation split; a seeded hash of the id.
bool in_validation_split(const std::string& video_id, double fraction, std::uint64_t seed);

struct EpochRecord {
  std::size_t epoch = 0;  // 1-based
  model::LossBreakdown train;  // mean per sample
  std::optional<model::LossBreakdown> validation;
};

struct RunReport {
  model::ModelConfig model_config;
  TrainConfig config;
  std::size_t train_videos = 0, validation_videos = 0;
  std::vector<EpochRecord> epochs;
  std::size_t best_epoch = 0;
  std::optional<metrics::MetricsReport> final_metrics;
  double wall_seconds = 0.0;
};

// "key=value" lines: config echo, one epoch.N.* group per epoch, final metrics.
std::string report_text(const RunReport& report);
// One JSON record per line: a config record, one per epoch, a final record.
std::string report_records(const RunReport& report);

struct TrainResult {
  model::SemPosModel model;
  data::Vocabulary vocab;
  RunReport report;
};

using ProgressFn = std::function<void(const EpochRecord&)>;

// Builds the vocabulary from the corpus unless one is given, sets the model's
// vocab_size, then runs seeded Adam over shuffled mini-batches. Each step
// samples one reference per video and masks features when the wiring keeps
// the VFM. Keeps the parameters of the best validation l_all (the last epoch
// without a validation split). Throws TrainingDiverged on a non-finite loss.
TrainResult train(const std::vector<data::VideoSample>& corpus, model::ModelConfig model_config,
                  const TrainConfig& config, const std::optional<data::Vocabulary>& vocab = {},
                  const ProgressFn& progress = {});

// Mean eval-mode loss over every reference of every video.
model::LossBreakdown mean_loss(const model::SemPosModel& model, const data::Vocabulary& vocab,
                               const std::vector<data::VideoSample>& samples,
                               const data::Embedder& embedder, const model::LossWeights& weights);

struct Evaluation {
  std::vector<data::Candidate> candidates;
  metrics::MetricsReport metrics;
};

// Greedy-decodes each video and scores against all of its references.
Evaluation evaluate(const model::SemPosModel& model, const data::Vocabulary& vocab,
                    const std::vector<data::VideoSample>& samples);
// Scores a candidates file against the references of the given samples.
metrics::MetricsReport evaluate_candidates(const std::vector<data::Candidate>& candidates,
                                           const std::vector<data::AnnotationRecord>& references);

struct AblationConfig {
  std::vector<std::uint64_t> seeds{1, 2, 3, 4, 5};
  std::size_t train_videos = 32;
  std::size_t test_videos = 16;
  std::size_t refs_per_video = 3;
  data::CorpusOptions corpus;
  double noise_sigma = 0.1;
  model::ModelConfig model;
  TrainConfig train;
  // Each entry lists the blocks removed; empty is the full model.
  std::vector<std::vector<std::string>> variants{{}, {"verb"}, {"glfb"}};
};

struct AblationRow {
  std::uint64_t seed = 0;
  std::string variant;  // Wiring::describe()
  metrics::MetricsReport metrics;
};

// Per seed: a training corpus and a separately seeded held-out corpus from the
// same grammar; each variant trains on the first and is scored on the second.
std::vector<AblationRow> run_ablation(const AblationConfig& config,
                                      const std::function<void(const AblationRow&)>& progress = {});

}  // namespace sempos::train
