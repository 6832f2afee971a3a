#include "sempos/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>
#include <limits>
#include <sstream>
#include <json.hpp>

#include "sempos/corpus.hpp"
#include "sempos/errors.hpp"

namespace sempos::metrics {

namespace {

using NgramCounts = std::map<Sentence, std::size_t>;

NgramCounts ngrams(const Sentence& s, std::size_t n) {
  NgramCounts out;
  if (s.size() < n) return out;
  for (std::size_t i = 0; i + n <= s.size(); ++i) {
    ++out[Sentence(s.begin() + static_cast<std::ptrdiff_t>(i),
                   s.begin() + static_cast<std::ptrdiff_t>(i + n))];
  }
  return out;
}

void require_nonempty(const EvalCorpus& corpus) {
  if (corpus.empty()) throw EmptyCorpus("metric over an empty corpus");
  for (const auto& item : corpus) {
    if (item.references.empty()) throw InvalidConfig("evaluation item without references");
  }
}

std::size_t lcs_length(const Sentence& a, const Sentence& b) {
  std::vector<std::size_t> prev(b.size() + 1, 0), cur(b.size() + 1, 0);
  for (std::size_t i = 1; i <= a.size(); ++i) {
    for (std::size_t j = 1; j <= b.size(); ++j) {
      cur[j] = a[i - 1] == b[j - 1] ? prev[j - 1] + 1 : std::max(prev[j], cur[j - 1]);
    }
    std::swap(prev, cur);
  }
  return prev[b.size()];
}

}  // namespace

EvalCorpus normalize(EvalCorpus corpus) {
  require_nonempty(corpus);
  auto lower = [](Sentence& s) {
    for (auto& t : s) t = data::to_lower(t);
  };
  for (auto& item : corpus) {
    lower(item.candidate);
    for (auto& r : item.references) lower(r);
  }
  return corpus;
}

// --- BLEU ---

double bleu4(const EvalCorpus& corpus) {
  require_nonempty(corpus);
  std::array<std::size_t, 4> matched{}, total{};
  std::size_t cand_len = 0, ref_len = 0;
  for (const auto& item : corpus) {
    const std::size_t c = item.candidate.size();
    cand_len += c;
    std::size_t best = item.references.front().size();
    for (const auto& r : item.references) {
      const auto d = [c](std::size_t len) { return len > c ? len - c : c - len; };
      if (d(r.size()) < d(best) || (d(r.size()) == d(best) && r.size() < best)) best = r.size();
    }
    ref_len += best;
    for (std::size_t n = 1; n <= 4; ++n) {
      const auto cand = ngrams(item.candidate, n);
      NgramCounts max_ref;
      for (const auto& r : item.references) {
        for (const auto& [g, cnt] : ngrams(r, n)) max_ref[g] = std::max(max_ref[g], cnt);
      }
      for (const auto& [g, cnt] : cand) {
        total[n - 1] += cnt;
        auto it = max_ref.find(g);
        if (it != max_ref.end()) matched[n - 1] += std::min(cnt, it->second);
      }
    }
  }
  double log_p = 0.0;
  for (std::size_t n = 0; n < 4; ++n) {
    if (matched[n] == 0) return 0.0;
    log_p += std::log(static_cast<double>(matched[n]) / static_cast<double>(total[n]));
  }
  const double bp = cand_len < ref_len
                        ? std::exp(1.0 - static_cast<double>(ref_len) / static_cast<double>(cand_len))
                        : 1.0;
  return bp * std::exp(log_p / 4.0);
}

// --- ROUGE-L ---

double rouge_l(const EvalCorpus& corpus) {
  require_nonempty(corpus);
  constexpr double beta2 = 1.2 * 1.2;
  double sum = 0.0;
  for (const auto& item : corpus) {
    double best = 0.0;
    for (const auto& r : item.references) {
      const auto l = static_cast<double>(lcs_length(item.candidate, r));
      if (l == 0.0) continue;
      const double p = l / static_cast<double>(item.candidate.size());
      const double rec = l / static_cast<double>(r.size());
      best = std::max(best, (1.0 + beta2) * p * rec / (rec + beta2 * p));
    }
    sum += best;
  }
  return sum / static_cast<double>(corpus.size());
}

// --- CIDEr ---

double cider(const EvalCorpus& corpus, std::vector<std::string>* warnings) {
  require_nonempty(corpus);
  const bool flat_idf = corpus.size() == 1;
  if (flat_idf) {
    const std::string msg = "cider: single-video corpus, IDF weights set to 1";
    if (warnings) {
      warnings->push_back(msg);
    } else {
      std::cerr << "warning: " << msg << '\n';
    }
  }
  const double n_videos = static_cast<double>(corpus.size());
  double score = 0.0;
  for (std::size_t n = 1; n <= 4; ++n) {
    std::map<Sentence, std::size_t> df;
    for (const auto& item : corpus) {
      std::map<Sentence, bool> seen;
      for (const auto& r : item.references) {
        for (const auto& entry : ngrams(r, n)) seen[entry.first] = true;
      }
      for (const auto& entry : seen) ++df[entry.first];
    }
    auto vec = [&](const Sentence& s) {
      std::map<Sentence, double> v;
      const auto counts = ngrams(s, n);
      std::size_t len = 0;
      for (const auto& entry : counts) len += entry.second;
      for (const auto& [g, c] : counts) {
        auto it = df.find(g);
        const double d = it == df.end() ? 1.0 : static_cast<double>(it->second);
        const double idf = flat_idf ? 1.0 : std::log(n_videos / d);
        v[g] = static_cast<double>(c) / static_cast<double>(len) * idf;
      }
      return v;
    };
    auto norm2 = [](const std::map<Sentence, double>& v) {
      double s = 0.0;
      for (const auto& entry : v) s += entry.second * entry.second;
      return s;
    };
    double order_sum = 0.0;
    for (const auto& item : corpus) {
      const auto c = vec(item.candidate);
      const double nc = norm2(c);
      double ref_sum = 0.0;
      for (const auto& r : item.references) {
        const auto rv = vec(r);
        const double nr = norm2(rv);
        if (nc == 0.0 || nr == 0.0) continue;
        double dot = 0.0;
        for (const auto& [g, w] : c) {
          auto it = rv.find(g);
          if (it != rv.end()) dot += w * it->second;
        }
        // sqrt of the product keeps identical vectors at exactly 1.
        ref_sum += dot / std::sqrt(nc * nr);
      }
      order_sum += ref_sum / static_cast<double>(item.references.size());
    }
    score += order_sum / n_videos / 4.0;
  }
  return 10.0 * score;
}

// --- METEOR-lite ---

std::string stem(const std::string& word) {
  for (const char* suffix : {"ing", "ed", "es", "s"}) {
    const std::size_t n = std::char_traits<char>::length(suffix);
    if (word.size() >= n + 3 && word.compare(word.size() - n, n, suffix) == 0) {
      return word.substr(0, word.size() - n);
    }
  }
  return word;
}

namespace {

// Returns the aligned reference position per candidate token (npos if none).
// Each stage walks the candidate left to right and prefers the reference slot
// right after the previous alignment, which keeps chunks long.
std::vector<std::size_t> align(const Sentence& cand, const Sentence& ref) {
  constexpr auto npos = std::numeric_limits<std::size_t>::max();
  std::vector<std::size_t> to_ref(cand.size(), npos);
  std::vector<bool> used(ref.size(), false);
  auto stage = [&](auto&& key) {
    for (std::size_t i = 0; i < cand.size(); ++i) {
      if (to_ref[i] != npos) continue;
      const auto k = key(cand[i]);
      std::size_t pick = npos;
      if (i > 0 && to_ref[i - 1] != npos) {
        const std::size_t next = to_ref[i - 1] + 1;
        if (next < ref.size() && !used[next] && key(ref[next]) == k) pick = next;
      }
      for (std::size_t j = 0; pick == npos && j < ref.size(); ++j) {
        if (!used[j] && key(ref[j]) == k) pick = j;
      }
      if (pick != npos) {
        to_ref[i] = pick;
        used[pick] = true;
      }
    }
  };
  stage([](const std::string& w) { return w; });
  stage([](const std::string& w) { return stem(w); });
  return to_ref;
}

double meteor_sentence(const Sentence& cand, const Sentence& ref) {
  constexpr auto npos = std::numeric_limits<std::size_t>::max();
  const auto to_ref = align(cand, ref);
  std::size_t matches = 0, chunks = 0;
  std::size_t prev = npos;
  for (std::size_t i = 0; i < to_ref.size(); ++i) {
    if (to_ref[i] == npos) {
      prev = npos;
      continue;
    }
    ++matches;
    if (prev == npos || to_ref[i] != prev + 1) ++chunks;
    prev = to_ref[i];
  }
  if (matches == 0) return 0.0;
  const double m = static_cast<double>(matches);
  const double p = m / static_cast<double>(cand.size());
  const double r = m / static_cast<double>(ref.size());
  const double fmean = 10.0 * p * r / (r + 9.0 * p);
  const double frag = static_cast<double>(chunks) / m;
  return fmean * (1.0 - 0.5 * frag * frag * frag);
}

}  // namespace

double meteor_lite(const EvalCorpus& corpus) {
  require_nonempty(corpus);
  double sum = 0.0;
  for (const auto& item : corpus) {
    double best = 0.0;
    for (const auto& r : item.references) best = std::max(best, meteor_sentence(item.candidate, r));
    sum += best;
  }
  return sum / static_cast<double>(corpus.size());
}

// --- language models ---

UniformLM::UniformLM(std::vector<std::string> vocabulary) : vocab_(std::move(vocabulary)) {
  if (vocab_.empty()) throw EmptyCorpus("uniform LM over an empty vocabulary");
}

double UniformLM::log_prob(std::span<const std::string>, const std::string&) const {
  return -std::log(static_cast<double>(vocab_.size()));
}

NgramLM::NgramLM(std::size_t order, double k) : order_(order), k_(k) {
  if (order == 0) throw InvalidConfig("n-gram order must be at least 1");
  if (!(k > 0.0)) throw InvalidConfig("add-k smoothing needs k > 0");
  vocab_[kSentenceEnd] = 0;
  vocab_[kUnknown] = 0;
}

void NgramLM::add(const Sentence& sentence) {
  Sentence padded(order_ - 1, kSentenceStart);
  for (const auto& t : sentence) {
    padded.push_back(t);
    ++vocab_[t];
  }
  padded.push_back(kSentenceEnd);
  for (std::size_t i = order_ - 1; i < padded.size(); ++i) {
    Sentence ctx(padded.begin() + static_cast<std::ptrdiff_t>(i - (order_ - 1)),
                 padded.begin() + static_cast<std::ptrdiff_t>(i));
    ++counts_[ctx][padded[i]];
    ++totals_[ctx];
  }
}

const std::string& NgramLM::map_token(const std::string& token) const {
  static const std::string unk = kUnknown;
  static const std::string start = kSentenceStart;
  if (token == start) return token;
  auto it = vocab_.find(token);
  return it == vocab_.end() ? unk : it->first;
}

Sentence NgramLM::context_of(std::span<const std::string> history) const {
  Sentence ctx(order_ - 1, kSentenceStart);
  const std::size_t take = std::min(history.size(), order_ - 1);
  for (std::size_t i = 0; i < take; ++i) {
    ctx[order_ - 1 - take + i] = map_token(history[history.size() - take + i]);
  }
  return ctx;
}

double NgramLM::prob(std::span<const std::string> history, const std::string& token) const {
  const Sentence ctx = context_of(history);
  const std::string& w = map_token(token);
  double c = 0.0, total = 0.0;
  if (auto it = counts_.find(ctx); it != counts_.end()) {
    total = static_cast<double>(totals_.at(ctx));
    if (auto jt = it->second.find(w); jt != it->second.end()) c = static_cast<double>(jt->second);
  }
  return (c + k_) / (total + k_ * static_cast<double>(vocab_.size()));
}

double NgramLM::log_prob(std::span<const std::string> history, const std::string& token) const {
  return std::log(prob(history, token));
}

std::vector<std::string> NgramLM::vocabulary() const {
  std::vector<std::string> out;
  for (const auto& entry : vocab_) out.push_back(entry.first);
  return out;
}

std::size_t NgramLM::count(const Sentence& context, const std::string& token) const {
  auto it = counts_.find(context);
  if (it == counts_.end()) return 0;
  auto jt = it->second.find(token);
  return jt == it->second.end() ? 0 : jt->second;
}

std::unique_ptr<NgramLM> ngram_lm_train(const std::vector<Sentence>& corpus, std::size_t order,
                                        double k) {
  if (corpus.empty()) throw EmptyCorpus("n-gram LM needs at least one sentence");
  auto lm = std::make_unique<NgramLM>(order, k);
  for (const auto& s : corpus) lm->add(s);
  return lm;
}

double perplexity(const Sentence& caption, const LanguageModel& lm) {
  if (caption.empty()) throw EmptyCaption("perplexity of an empty caption");
  double log_sum = 0.0;
  for (std::size_t i = 0; i < caption.size(); ++i) {
    log_sum += lm.log_prob(std::span(caption.data(), i), caption[i]);
  }
  std::size_t n = caption.size();
  if (auto end = lm.end_token()) {
    log_sum += lm.log_prob(caption, *end);
    ++n;
  }
  return std::exp(-log_sum / static_cast<double>(n));
}

double grammatical_score(const std::vector<Sentence>& captions, const LanguageModel& lm) {
  if (captions.empty()) throw EmptyCorpus("grammatical score over no captions");
  double sum = 0.0;
  for (const auto& c : captions) sum += perplexity(c, lm);
  return sum / static_cast<double>(captions.size());
}

MetricsReport score_corpus(const EvalCorpus& corpus, double lm_k) {
  require_nonempty(corpus);
  std::vector<Sentence> refs, cands;
  for (const auto& item : corpus) {
    refs.insert(refs.end(), item.references.begin(), item.references.end());
    cands.push_back(item.candidate);
  }
  const auto lm = ngram_lm_train(refs, 2, lm_k);
  MetricsReport r;
  r.videos = corpus.size();
  r.bleu4 = bleu4(corpus);
  r.meteor = meteor_lite(corpus);
  r.rouge_l = rouge_l(corpus);
  std::vector<std::string> warnings;
  r.cider = cider(corpus, &warnings);
  // An empty decoded caption has no perplexity; fall back to scoring </s> alone.
  double gs = 0.0;
  for (const auto& c : cands) {
    gs += c.empty() ? std::exp(-lm->log_prob({}, kSentenceEnd)) : perplexity(c, *lm);
  }
  r.gs = gs / static_cast<double>(cands.size());
  return r;
}

std::string to_text(const MetricsReport& r) {
  std::ostringstream os;
  os.precision(std::numeric_limits<double>::max_digits10);
  os << "videos=" << r.videos << '\n'
     << "bleu4=" << r.bleu4 << '\n'
     << "meteor=" << r.meteor << '\n'
     << "rouge_l=" << r.rouge_l << '\n'
     << "cider=" << r.cider << '\n'
     << "gs=" << r.gs << '\n';
  return os.str();
}

std::string to_json(const MetricsReport& r) {
  nlohmann::json j;
  j["videos"] = r.videos;
  j["bleu4"] = r.bleu4;
  j["meteor"] = r.meteor;
  j["rouge_l"] = r.rouge_l;
  j["cider"] = r.cider;
  j["gs"] = r.gs;
  return j.dump();
}

}  // namespace sempos::metrics
