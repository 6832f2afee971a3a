#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "sempos/tensor.hpp"

namespace sempos::data {

class Embedder;

inline constexpr std::size_t kBosId = 0;
inline constexpr std::size_t kEosId = 1;

std::string to_lower(std::string_view text);
std::vector<std::string> split_words(std::string_view text);
std::string join_words(const std::vector<std::string>& words);

// Token <-> id map. Ids 0 and 1 are reserved for <bos> and <eos>; tokens are
// lower-cased before lookup.
class Vocabulary {
 public:
  Vocabulary();
  explicit Vocabulary(const std::vector<std::string>& tokens);

  std::size_t add(std::string_view token);
  std::size_t id(std::string_view token) const;  // throws OutOfVocabulary
  bool contains(std::string_view token) const;
  const std::string& token(std::size_t id) const;
  std::size_t size() const { return tokens_.size(); }
  const std::vector<std::string>& tokens() const { return tokens_; }

  std::vector<std::size_t> encode(const std::vector<std::string>& words) const;
  std::vector<std::string> decode(const std::vector<std::size_t>& ids) const;

 private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, std::size_t> index_;
};

// One reference caption with its part-of-speech annotation. Each present
// component is a space-joined contiguous run of `tokens`.
struct CaptionAnnotation {
  std::vector<std::string> tokens;
  std::optional<std::string> det_subject;
  std::optional<std::string> verb;
  std::optional<std::string> aux_verb;
  std::optional<std::string> det_object;
  std::optional<std::string> adverb;
  std::optional<std::string> adjective;
  std::optional<std::string> conjunction;

  bool operator==(const CaptionAnnotation&) const = default;
};

struct VideoSample {
  std::string video_id;
  Tensor spatial;   // T x D_s
  Tensor temporal;  // T x D_t
  Tensor objects;   // K x D_n
  std::vector<CaptionAnnotation> references;
};

enum PosComponent : std::size_t { kDetSubject = 0, kVerb = 1, kAuxVerb = 2, kDetObject = 3 };
inline constexpr std::array<const char*, 4> kPosNames = {"det_subject", "verb", "aux_verb",
                                                          "det_object"};

// Supervision targets for one caption. Embeddings are [1 x E] rows; an entry
// is meaningful only when its presence flag is set.
struct POSGroundTruth {
  std::array<std::string, 4> text;
  std::array<Tensor, 4> embedding;
  std::array<bool, 4> present{};
  Tensor caption_embedding;
  std::string caption_text;
  // Mean embedding of the subject/object head nouns (nouns-anchor target).
  Tensor noun_embedding;
  bool has_nouns = false;
};

POSGroundTruth extract_pos_targets(const CaptionAnnotation& ann, const Embedder& embedder);
void validate_annotation(const CaptionAnnotation& ann);

struct SceneGrammar {
  std::vector<std::string> determiners;
  std::vector<std::string> subjects;
  std::vector<std::string> aux_verbs;
  std::vector<std::string> verbs;
  std::vector<std::string> objects;
  std::map<std::string, std::vector<double>> concepts;
  std::size_t concept_dim = 16;
  double noise_sigma = 0.1;

  // Subject i takes determiner i mod |determiners| and aux verb i mod
  // |aux_verbs|; object j takes determiner j mod |determiners|.
  const std::string& subject_determiner(std::size_t subject) const;
  const std::string& subject_aux(std::size_t subject) const;
  const std::string& object_determiner(std::size_t object) const;

  // Throws EmptyGrammar on an empty list or a token without a concept vector.
  void validate() const;
  std::vector<std::string> all_tokens() const;
};

// Six subjects, six verbs, six objects, two determiners, two aux verbs, with
// Gaussian concept vectors of length `concept_dim` drawn from `seed`.
SceneGrammar default_grammar(std::size_t concept_dim = 16, double noise_sigma = 0.1,
                             std::uint64_t seed = 1234);

struct CorpusOptions {
  std::size_t frames = 8;
  std::size_t objects = 4;
  // Probability that a video's captions have no object phrase.
  double drop_object_rate = 0.0;
};

// Per video: subject, verb and object are drawn uniformly. Temporal rows are the
// verb concept plus noise; spatial rows blend subject into object concept
// over time plus noise; object rows alternate subject / object concepts plus
// noise. Reference 0 uses the canonical determiners, later references draw
// determiners uniformly.
std::vector<VideoSample> generate_corpus(const SceneGrammar& grammar, std::size_t n_videos,
                                         std::size_t refs_per_video, std::uint64_t seed,
                                         const CorpusOptions& options = {});

Vocabulary build_vocabulary(const std::vector<VideoSample>& samples);
Vocabulary build_vocabulary(const SceneGrammar& grammar);

struct PosStats {
  std::size_t captions = 0;
  // Percentages in [0, 100], keyed by component name.
  std::map<std::string, double> percent;
  std::map<std::string, std::size_t> counts;
};

// The four supervised components are always reported; adverb, adjective and
// conjunction only when at least one caption is annotated with them.
PosStats pos_stats(const std::vector<CaptionAnnotation>& captions);

std::vector<CaptionAnnotation> all_references(const std::vector<VideoSample>& samples);

}  // namespace sempos::data
