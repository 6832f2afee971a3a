#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "sempos/tensor.hpp"

namespace sempos::data {

// Text -> fixed-length dense vector. Implementations return [1 x dim()] rows.
class Embedder {
 public:
  virtual ~Embedder() = default;
  virtual std::size_t dim() const = 0;
  virtual Tensor embed(std::string_view text) const = 0;
};

// Unit-norm Gaussian vector seeded by a hash of the lower-cased text.
std::vector<double> pseudo_embed(std::string_view text, std::size_t dim,
                                 std::uint64_t global_seed);

class PseudoEmbedder final : public Embedder {
 public:
  PseudoEmbedder(std::size_t dim, std::uint64_t seed) : dim_(dim), seed_(seed) {}
  std::size_t dim() const override { return dim_; }
  Tensor embed(std::string_view text) const override;

 private:
  std::size_t dim_;
  std::uint64_t seed_;
};

// Precomputed vectors, one "text<TAB>v1 v2 ... vE" record per line.
class LookupEmbedder final : public Embedder {
 public:
  static LookupEmbedder load(const std::string& path);
  static void save(const std::string& path,
                   const std::vector<std::pair<std::string, std::vector<double>>>& records);

  void insert(std::string_view text, std::vector<double> values);
  std::size_t dim() const override { return dim_; }
  // Throws OutOfVocabulary for unknown text.
  Tensor embed(std::string_view text) const override;

 private:
  std::size_t dim_ = 0;
  std::unordered_map<std::string, std::vector<double>> table_;
};

}  // namespace sempos::data
