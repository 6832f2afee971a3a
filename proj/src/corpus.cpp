#include "sempos/corpus.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <set>
#include <sstream>

#include "sempos/embedding.hpp"
#include "sempos/errors.hpp"
#include "sempos/rng.hpp"

namespace sempos::data {

std::string to_lower(std::string_view text) {
  std::string out(text);
  for (auto& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

std::vector<std::string> split_words(std::string_view text) {
  std::vector<std::string> out;
  std::istringstream in{std::string(text)};
  std::string w;
  while (in >> w) out.push_back(w);
  return out;
}

std::string join_words(const std::vector<std::string>& words) {
  std::string out;
  for (std::size_t i = 0; i < words.size(); ++i) {
    if (i) out += ' ';
    out += words[i];
  }
  return out;
}

// --- Vocabulary ---

Vocabulary::Vocabulary() {
  add("<bos>");
  add("<eos>");
}

Vocabulary::Vocabulary(const std::vector<std::string>& tokens) : Vocabulary() {
  for (const auto& t : tokens) add(t);
}

std::size_t Vocabulary::add(std::string_view token) {
  std::string key = to_lower(token);
  auto it = index_.find(key);
  if (it != index_.end()) return it->second;
  const std::size_t id = tokens_.size();
  index_.emplace(key, id);
  tokens_.push_back(std::move(key));
  return id;
}

std::size_t Vocabulary::id(std::string_view token) const {
  auto it = index_.find(to_lower(token));
  if (it == index_.end()) {
    throw OutOfVocabulary("token '" + std::string(token) + "' is not in the vocabulary");
  }
  return it->second;
}

bool Vocabulary::contains(std::string_view token) const {
  return index_.count(to_lower(token)) != 0;
}

const std::string& Vocabulary::token(std::size_t id) const {
  if (id >= tokens_.size()) {
    throw OutOfVocabulary("token id " + std::to_string(id) + " outside vocabulary");
  }
  return tokens_[id];
}

std::vector<std::size_t> Vocabulary::encode(const std::vector<std::string>& words) const {
  std::vector<std::size_t> out;
  out.reserve(words.size());
  for (const auto& w : words) out.push_back(id(w));
  return out;
}

std::vector<std::string> Vocabulary::decode(const std::vector<std::size_t>& ids) const {
  std::vector<std::string> out;
  out.reserve(ids.size());
  for (auto i : ids) out.push_back(token(i));
  return out;
}

// --- POS targets ---

namespace {

bool is_contiguous_run(const std::vector<std::string>& tokens,
                       const std::vector<std::string>& run) {
  if (run.empty() || run.size() > tokens.size()) return false;
  for (std::size_t s = 0; s + run.size() <= tokens.size(); ++s) {
    bool match = true;
    for (std::size_t k = 0; match && k < run.size(); ++k) {
      match = to_lower(tokens[s + k]) == to_lower(run[k]);
    }
    if (match) return true;
  }
  return false;
}

const std::optional<std::string>& component(const CaptionAnnotation& ann, std::size_t k) {
  switch (k) {
    case kDetSubject: return ann.det_subject;
    case kVerb: return ann.verb;
    case kAuxVerb: return ann.aux_verb;
    default: return ann.det_object;
  }
}

}  // namespace

void validate_annotation(const CaptionAnnotation& ann) {
  if (ann.tokens.empty()) throw MalformedAnnotation("caption has no tokens");
  const std::pair<const char*, const std::optional<std::string>*> fields[] = {
      {"det_subject", &ann.det_subject}, {"verb", &ann.verb},
      {"aux_verb", &ann.aux_verb},       {"det_object", &ann.det_object},
      {"adverb", &ann.adverb},           {"adjective", &ann.adjective},
      {"conjunction", &ann.conjunction}};
  for (const auto& [name, field] : fields) {
    if (!field->has_value()) continue;
    if (!is_contiguous_run(ann.tokens, split_words(**field))) {
      throw MalformedAnnotation(std::string(name) + " '" + **field +
                                "' is not a contiguous run of caption '" +
                                join_words(ann.tokens) + "'");
    }
  }
}

POSGroundTruth extract_pos_targets(const CaptionAnnotation& ann, const Embedder& embedder) {
  validate_annotation(ann);
  POSGroundTruth gt;
  std::vector<Tensor> nouns;
  for (std::size_t k = 0; k < 4; ++k) {
    const auto& field = component(ann, k);
    if (!field) continue;
    // Multi-word components are re-joined with exactly one space.
    const auto words = split_words(*field);
    gt.text[k] = to_lower(join_words(words));
    gt.embedding[k] = embedder.embed(gt.text[k]);
    gt.present[k] = true;
    if (k == kDetSubject || k == kDetObject) nouns.push_back(embedder.embed(words.back()));
  }
  gt.caption_text = to_lower(join_words(ann.tokens));
  gt.caption_embedding = embedder.embed(gt.caption_text);
  if (!nouns.empty()) {
    Tensor mean(nouns.front().shape());
    for (const auto& n : nouns) {
      for (std::size_t i = 0; i < mean.size(); ++i) mean[i] += n[i];
    }
    for (auto& v : mean.values()) v /= static_cast<double>(nouns.size());
    gt.noun_embedding = std::move(mean);
    gt.has_nouns = true;
  }
  return gt;
}

// --- Grammar ---

const std::string& SceneGrammar::subject_determiner(std::size_t subject) const {
  return determiners[subject % determiners.size()];
}

const std::string& SceneGrammar::subject_aux(std::size_t subject) const {
  return aux_verbs[subject % aux_verbs.size()];
}

const std::string& SceneGrammar::object_determiner(std::size_t object) const {
  return determiners[object % determiners.size()];
}

std::vector<std::string> SceneGrammar::all_tokens() const {
  std::vector<std::string> out;
  for (const auto* list : {&determiners, &subjects, &aux_verbs, &verbs, &objects}) {
    for (const auto& t : *list) {
      if (std::find(out.begin(), out.end(), t) == out.end()) out.push_back(t);
    }
  }
  return out;
}

void SceneGrammar::validate() const {
  for (const auto* list : {&determiners, &subjects, &aux_verbs, &verbs, &objects}) {
    if (list->empty()) throw EmptyGrammar("grammar has an empty token list");
  }
  if (concept_dim == 0) throw EmptyGrammar("grammar concept dimension is zero");
  for (const auto& t : all_tokens()) {
    auto it = concepts.find(t);
    if (it == concepts.end() || it->second.size() != concept_dim) {
      throw EmptyGrammar("token '" + t + "' lacks a concept vector of length " +
                         std::to_string(concept_dim));
    }
  }
  if (noise_sigma < 0.0) throw InvalidConfig("noise sigma must be nonnegative");
}

SceneGrammar default_grammar(std::size_t concept_dim, double noise_sigma, std::uint64_t seed) {
  SceneGrammar g;
  g.determiners = {"a", "the"};
  g.subjects = {"man", "people", "woman", "kids", "dog", "birds"};
  g.aux_verbs = {"is", "are"};
  g.verbs = {"playing", "riding", "holding", "eating", "pushing", "watching"};
  g.objects = {"guitar", "balls", "bike", "apples", "cart", "cards"};
  g.concept_dim = concept_dim;
  g.noise_sigma = noise_sigma;
  Rng rng(seed);
  const double s = 1.0 / std::sqrt(static_cast<double>(concept_dim));
  for (const auto& t : g.all_tokens()) {
    std::vector<double> v(concept_dim);
    for (auto& x : v) x = rng.normal() * s;
    g.concepts[t] = std::move(v);
  }
  return g;
}

// --- Corpus generation ---

std::vector<VideoSample> generate_corpus(const SceneGrammar& grammar, std::size_t n_videos,
                                         std::size_t refs_per_video, std::uint64_t seed,
                                         const CorpusOptions& options) {
  grammar.validate();
  if (n_videos == 0) throw EmptyCorpus("n_videos must be at least 1");
  if (refs_per_video == 0) throw InvalidConfig("refs_per_video must be at least 1");
  if (options.frames == 0 || options.objects == 0) {
    throw InvalidConfig("frames and objects must be positive");
  }
  const std::size_t dim = grammar.concept_dim;
  const std::size_t frames = options.frames;
  std::vector<VideoSample> out;
  out.reserve(n_videos);
  const Rng root(seed);
  for (std::size_t v = 0; v < n_videos; ++v) {
    char id[32];
    std::snprintf(id, sizeof id, "video%04zu", v);
    Rng rng = root.substream(id);
    const std::size_t subj = rng.uniform_index(grammar.subjects.size());
    const std::size_t verb = rng.uniform_index(grammar.verbs.size());
    const std::size_t obj = rng.uniform_index(grammar.objects.size());
    const bool has_object = !(rng.uniform() < options.drop_object_rate);

    const auto& cs = grammar.concepts.at(grammar.subjects[subj]);
    const auto& cv = grammar.concepts.at(grammar.verbs[verb]);
    const auto& co = has_object ? grammar.concepts.at(grammar.objects[obj]) : cs;

    VideoSample sample;
    sample.video_id = id;
    sample.spatial = Tensor({frames, dim});
    sample.temporal = Tensor({frames, dim});
    sample.objects = Tensor({options.objects, dim});
    auto noise = [&] { return grammar.noise_sigma == 0.0 ? 0.0 : grammar.noise_sigma * rng.normal(); };
    for (std::size_t t = 0; t < frames; ++t) {
      const double lambda =
          frames > 1 ? static_cast<double>(t) / static_cast<double>(frames - 1) : 0.5;
      for (std::size_t j = 0; j < dim; ++j) {
        sample.temporal.at(t, j) = cv[j] + noise();
        sample.spatial.at(t, j) = (1.0 - lambda) * cs[j] + lambda * co[j] + noise();
      }
    }
    for (std::size_t k = 0; k < options.objects; ++k) {
      const auto& c = (k % 2 == 0) ? cs : co;
      for (std::size_t j = 0; j < dim; ++j) sample.objects.at(k, j) = c[j] + noise();
    }

    for (std::size_t r = 0; r < refs_per_video; ++r) {
      const std::string& det_s =
          r == 0 ? grammar.subject_determiner(subj)
                 : grammar.determiners[rng.uniform_index(grammar.determiners.size())];
      const std::string& det_o =
          r == 0 ? grammar.object_determiner(obj)
                 : grammar.determiners[rng.uniform_index(grammar.determiners.size())];
      CaptionAnnotation ann;
      ann.tokens = {det_s, grammar.subjects[subj], grammar.subject_aux(subj),
                    grammar.verbs[verb]};
      ann.det_subject = det_s + " " + grammar.subjects[subj];
      ann.aux_verb = grammar.subject_aux(subj);
      ann.verb = grammar.verbs[verb];
      if (has_object) {
        ann.tokens.push_back(det_o);
        ann.tokens.push_back(grammar.objects[obj]);
        ann.det_object = det_o + " " + grammar.objects[obj];
      }
      sample.references.push_back(std::move(ann));
    }
    out.push_back(std::move(sample));
  }
  return out;
}

Vocabulary build_vocabulary(const std::vector<VideoSample>& samples) {
  std::set<std::string> tokens;
  for (const auto& s : samples) {
    for (const auto& r : s.references) {
      for (const auto& t : r.tokens) tokens.insert(to_lower(t));
    }
  }
  return Vocabulary(std::vector<std::string>(tokens.begin(), tokens.end()));
}

Vocabulary build_vocabulary(const SceneGrammar& grammar) {
  std::set<std::string> tokens;
  for (const auto& t : grammar.all_tokens()) tokens.insert(to_lower(t));
  return Vocabulary(std::vector<std::string>(tokens.begin(), tokens.end()));
}

// --- Statistics ---

PosStats pos_stats(const std::vector<CaptionAnnotation>& captions) {
  if (captions.empty()) throw EmptyCorpus("pos_stats needs at least one caption");
  PosStats stats;
  stats.captions = captions.size();
  auto tally = [&](const char* name, auto member, bool always) {
    std::size_t present = 0;
    for (const auto& c : captions) present += (c.*member).has_value() ? 1 : 0;
    if (!always && present == 0) return;
    stats.counts[name] = present;
    stats.percent[name] =
        100.0 * static_cast<double>(present) / static_cast<double>(captions.size());
  };
  tally("det_subject", &CaptionAnnotation::det_subject, true);
  tally("aux_verb", &CaptionAnnotation::aux_verb, true);
  tally("verb", &CaptionAnnotation::verb, true);
  tally("det_object", &CaptionAnnotation::det_object, true);
  tally("adverb", &CaptionAnnotation::adverb, false);
  tally("adjective", &CaptionAnnotation::adjective, false);
  tally("conjunction", &CaptionAnnotation::conjunction, false);
  return stats;
}

std::vector<CaptionAnnotation> all_references(const std::vector<VideoSample>& samples) {
  std::vector<CaptionAnnotation> out;
  for (const auto& s : samples) out.insert(out.end(), s.references.begin(), s.references.end());
  return out;
}

}  // namespace sempos::data
