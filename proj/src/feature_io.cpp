#include "sempos/feature_io.hpp"

#include <fstream>
#include <map>
#include <json.hpp>

#include "binary_io.hpp"
#include "sempos/errors.hpp"

namespace sempos::data {

namespace {

constexpr char kMagic[4] = {'S', 'E', 'M', 'F'};

void write_tensor(detail::LeWriter& w, const Tensor& t) {
  w.u32(static_cast<std::uint32_t>(t.rank()));
  for (auto d : t.shape()) w.u32(static_cast<std::uint32_t>(d));
  for (double v : t.values()) w.f32(static_cast<float>(v));
}

Tensor read_tensor(detail::LeReader& r) {
  const auto rank = r.u32();
  if (rank < 1 || rank > 3) throw CorruptFile(r.what() + ": invalid tensor rank");
  Shape shape(rank);
  std::size_t n = 1;
  for (auto& d : shape) {
    d = r.u32();
    n *= d;
    if (n > (std::size_t{1} << 32)) throw CorruptFile(r.what() + ": implausible tensor size");
  }
  std::vector<double> data(n);
  for (auto& v : data) v = static_cast<double>(r.f32());
  try {
    return Tensor(std::move(shape), std::move(data));
  } catch (const NonFiniteValue&) {
    throw CorruptFile(r.what() + ": non-finite feature value");
  }
}

}  // namespace

void save_features(const std::string& path, const std::vector<VideoSample>& samples) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw CorruptFile("cannot write feature file " + path);
  detail::LeWriter w(out);
  w.bytes(kMagic, 4);
  w.u16(kFeatureFormatVersion);
  w.u32(static_cast<std::uint32_t>(samples.size()));
  for (const auto& s : samples) {
    w.str(s.video_id);
    write_tensor(w, s.spatial);
    write_tensor(w, s.temporal);
    write_tensor(w, s.objects);
  }
  if (!out) throw CorruptFile("write failed for " + path);
}

std::vector<FeatureRecord> load_features(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CorruptFile("cannot open feature file " + path);
  detail::LeReader r(in, path);
  char magic[4];
  r.bytes(magic, 4);
  if (std::memcmp(magic, kMagic, 4) != 0) throw CorruptFile(path + ": bad magic");
  const auto version = r.u16();
  if (version != kFeatureFormatVersion) {
    throw VersionMismatch(path + ": feature format version " + std::to_string(version) +
                          ", expected " + std::to_string(kFeatureFormatVersion));
  }
  const auto count = r.u32();
  std::vector<FeatureRecord> out;
  for (std::uint32_t i = 0; i < count; ++i) {
    FeatureRecord rec;
    rec.video_id = r.str();
    rec.spatial = read_tensor(r);
    rec.temporal = read_tensor(r);
    rec.objects = read_tensor(r);
    out.push_back(std::move(rec));
  }
  if (!r.at_end()) throw CorruptFile(path + ": trailing bytes after last record");
  return out;
}

namespace {

using nlohmann::json;

json caption_to_json(const CaptionAnnotation& c) {
  json j;
  j["tokens"] = c.tokens;
  auto put = [&](const char* key, const std::optional<std::string>& v) {
    if (v) j[key] = *v;
  };
  put("det_subject", c.det_subject);
  put("aux_verb", c.aux_verb);
  put("verb", c.verb);
  put("det_object", c.det_object);
  put("adverb", c.adverb);
  put("adjective", c.adjective);
  put("conjunction", c.conjunction);
  return j;
}

CaptionAnnotation caption_from_json(const json& j) {
  CaptionAnnotation c;
  c.tokens = j.at("tokens").get<std::vector<std::string>>();
  auto get = [&](const char* key, std::optional<std::string>& v) {
    if (j.contains(key) && !j[key].is_null()) v = j[key].get<std::string>();
  };
  get("det_subject", c.det_subject);
  get("aux_verb", c.aux_verb);
  get("verb", c.verb);
  get("det_object", c.det_object);
  get("adverb", c.adverb);
  get("adjective", c.adjective);
  get("conjunction", c.conjunction);
  return c;
}

}  // namespace

void save_annotations(const std::string& path, const std::vector<AnnotationRecord>& records) {
  std::ofstream out(path);
  if (!out) throw CorruptFile("cannot write annotation file " + path);
  for (const auto& rec : records) {
    json j;
    j["video_id"] = rec.video_id;
    j["captions"] = json::array();
    for (const auto& c : rec.captions) j["captions"].push_back(caption_to_json(c));
    out << j.dump() << '\n';
  }
}

void save_annotations(const std::string& path, const std::vector<VideoSample>& samples) {
  std::vector<AnnotationRecord> records;
  records.reserve(samples.size());
  for (const auto& s : samples) records.push_back({s.video_id, s.references});
  save_annotations(path, records);
}

std::vector<AnnotationRecord> load_annotations(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw CorruptFile("cannot open annotation file " + path);
  std::vector<AnnotationRecord> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      const json j = json::parse(line);
      AnnotationRecord rec;
      rec.video_id = j.at("video_id").get<std::string>();
      for (const auto& c : j.at("captions")) rec.captions.push_back(caption_from_json(c));
      for (const auto& c : rec.captions) validate_annotation(c);
      out.push_back(std::move(rec));
    } catch (const json::exception& e) {
      throw MalformedAnnotation(path + ":" + std::to_string(lineno) + ": " + e.what());
    } catch (const MalformedAnnotation& e) {
      throw MalformedAnnotation(path + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  return out;
}

std::vector<VideoSample> load_samples(const std::string& features_path,
                                      const std::string& annotations_path) {
  auto features = load_features(features_path);
  std::map<std::string, std::vector<CaptionAnnotation>> by_id;
  for (auto& rec : load_annotations(annotations_path)) by_id[rec.video_id] = std::move(rec.captions);
  std::vector<VideoSample> out;
  out.reserve(features.size());
  for (auto& f : features) {
    auto it = by_id.find(f.video_id);
    if (it == by_id.end() || it->second.empty()) {
      throw MalformedAnnotation("video " + f.video_id + " has no reference captions");
    }
    out.push_back({f.video_id, std::move(f.spatial), std::move(f.temporal),
                   std::move(f.objects), it->second});
  }
  return out;
}

void save_candidates(const std::string& path, const std::vector<Candidate>& candidates) {
  std::ofstream out(path);
  if (!out) throw CorruptFile("cannot write candidates file " + path);
  for (const auto& c : candidates) out << c.video_id << '\t' << join_words(c.tokens) << '\n';
}

std::vector<Candidate> load_candidates(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw CorruptFile("cannot open candidates file " + path);
  std::vector<Candidate> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    const auto tab = line.find('\t');
    if (tab == std::string::npos || tab == 0) {
      throw CorruptFile(path + ":" + std::to_string(lineno) + ": expected video_id<TAB>tokens");
    }
    out.push_back({line.substr(0, tab), split_words(to_lower(line.substr(tab + 1)))});
  }
  return out;
}

}  // namespace sempos::data
