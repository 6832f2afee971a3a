#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "sempos/corpus.hpp"

namespace sempos::data {

// Feature file layout (little-endian):
//   "SEMF" | u16 version | u32 count
//   per video: u32 id_len | id bytes | 3 tensors (spatial, temporal, objects)
//   per tensor: u32 rank | u32 dims[rank] | f32 payload
inline constexpr std::uint16_t kFeatureFormatVersion = 1;

struct FeatureRecord {
  std::string video_id;
  Tensor spatial;
  Tensor temporal;
  Tensor objects;
};

void save_features(const std::string& path, const std::vector<VideoSample>& samples);
// Throws CorruptFile on bad magic or truncation, VersionMismatch on version.
std::vector<FeatureRecord> load_features(const std::string& path);

struct AnnotationRecord {
  std::string video_id;
  std::vector<CaptionAnnotation> captions;
};

// One JSON object per line:
//   {"video_id": "...", "captions": [{"tokens": [...], "det_subject": "...",
//    "aux_verb": "...", "verb": "...", "det_object": "..."}]}
// Absent components are omitted.
void save_annotations(const std::string& path, const std::vector<VideoSample>& samples);
void save_annotations(const std::string& path, const std::vector<AnnotationRecord>& records);
std::vector<AnnotationRecord> load_annotations(const std::string& path);

// Joins features and annotations by video id, in feature-file order.
std::vector<VideoSample> load_samples(const std::string& features_path,
                                      const std::string& annotations_path);

// Candidates file: "video_id<TAB>token token ..." per line.
struct Candidate {
  std::string video_id;
  std::vector<std::string> tokens;
};
void save_candidates(const std::string& path, const std::vector<Candidate>& candidates);
std::vector<Candidate> load_candidates(const std::string& path);

}  // namespace sempos::data
