#pragma once

#include <cstddef>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace sempos::metrics {

using Sentence = std::vector<std::string>;

struct EvalItem {
  Sentence candidate;
  std::vector<Sentence> references;  // at least one
};
using EvalCorpus = std::vector<EvalItem>;

// Lower-cases every token. Throws EmptyCorpus for no items and InvalidConfig
// for an item without references.
EvalCorpus normalize(EvalCorpus corpus);

// Corpus BLEU with n = 1..4, clipped counts, closest reference length for the
// brevity penalty and no smoothing.
double bleu4(const EvalCorpus& corpus);

// LCS F-measure with beta = 1.2, best reference per video, mean over videos.
double rouge_l(const EvalCorpus& corpus);

// TF-IDF n-gram cosine (n = 1..4) averaged over references and orders, x10.
// Document frequencies count videos whose references contain the n-gram.
// A single-video corpus has no usable IDF; every weight is then 1 and a
// warning is appended to `warnings` (or printed to stderr when null).
double cider(const EvalCorpus& corpus, std::vector<std::string>* warnings = nullptr);

// Exact then stem unigram matching, Fmean = 10PR / (R + 9P), fragmentation
// penalty 0.5 (chunks / matches)^3, best reference per video.
double meteor_lite(const EvalCorpus& corpus);

// Strips one of the suffixes ing, ed, es, s when at least three characters
// remain.
std::string stem(const std::string& word);

class LanguageModel {
 public:
  virtual ~LanguageModel() = default;
  // Natural-log probability of `token` following `history`.
  virtual double log_prob(std::span<const std::string> history, const std::string& token) const = 0;
  virtual std::vector<std::string> vocabulary() const = 0;
  // Sentence terminator scored after the last token, if the model has one.
  virtual std::optional<std::string> end_token() const { return std::nullopt; }
};

// Every token, in or out of vocabulary, has probability 1 / size.
class UniformLM : public LanguageModel {
 public:
  explicit UniformLM(std::vector<std::string> vocabulary);
  double log_prob(std::span<const std::string> history, const std::string& token) const override;
  std::vector<std::string> vocabulary() const override { return vocab_; }

 private:
  std::vector<std::string> vocab_;
};

inline constexpr const char* kSentenceStart = "<s>";
inline constexpr const char* kSentenceEnd = "</s>";
inline constexpr const char* kUnknown = "<unk>";

// Add-k smoothed n-gram model. Histories are padded with <s>; the vocabulary
// is the training tokens plus </s> and <unk>, and unseen tokens score as <unk>.
class NgramLM : public LanguageModel {
 public:
  NgramLM(std::size_t order, double k);
  void add(const Sentence& sentence);

  double log_prob(std::span<const std::string> history, const std::string& token) const override;
  double prob(std::span<const std::string> history, const std::string& token) const;
  std::vector<std::string> vocabulary() const override;
  std::optional<std::string> end_token() const override { return kSentenceEnd; }
  std::size_t order() const { return order_; }
  // Count of (context, token) in the training data; context has order-1 entries.
  std::size_t count(const Sentence& context, const std::string& token) const;

 private:
  Sentence context_of(std::span<const std::string> history) const;
  const std::string& map_token(const std::string& token) const;

  std::size_t order_;
  double k_;
  std::map<std::string, std::size_t> vocab_;
  std::map<Sentence, std::map<std::string, std::size_t>> counts_;
  std::map<Sentence, std::size_t> totals_;
};

// Throws EmptyCorpus for no sentences, InvalidConfig for order 0 or k <= 0.
std::unique_ptr<NgramLM> ngram_lm_train(const std::vector<Sentence>& corpus, std::size_t order,
                                        double k);

// exp(-mean log p) of one caption, counting the end token when present.
double perplexity(const Sentence& caption, const LanguageModel& lm);
// Mean perplexity over captions. Throws EmptyCaption on an empty caption and
// EmptyCorpus on no captions.
double grammatical_score(const std::vector<Sentence>& captions, const LanguageModel& lm);

struct MetricsReport {
  std::size_t videos = 0;
  double bleu4 = 0, meteor = 0, rouge_l = 0, cider = 0, gs = 0;
  bool operator==(const MetricsReport&) const = default;
};

// GS is scored with a bigram add-k model trained on all references.
MetricsReport score_corpus(const EvalCorpus& corpus, double lm_k = 0.1);

// "key=value" lines (videos, bleu4, meteor, rouge_l, cider, gs) and a one-line
// JSON object with the same keys. Values use max_digits10 so text round-trips.
std::string to_text(const MetricsReport& report);
std::string to_json(const MetricsReport& report);

}  // namespace sempos::metrics
