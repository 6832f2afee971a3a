#include "sempos/embedding.hpp"

#include <cmath>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "sempos/corpus.hpp"
#include "sempos/errors.hpp"
#include "sempos/rng.hpp"

namespace sempos::data {

std::vector<double> pseudo_embed(std::string_view text, std::size_t dim,
                                 std::uint64_t global_seed) {
  if (text.empty()) throw EmptyString("cannot embed an empty string");
  if (dim == 0) throw InvalidConfig("embedding dimension must be positive");
  const std::string key = to_lower(text);
  Rng rng(splitmix64(hash_string(key)) ^ splitmix64(global_seed + 0x5e3f));
  std::vector<double> v(dim);
  double norm = 0.0;
  for (auto& x : v) {
    x = rng.normal();
    norm += x * x;
  }
  norm = std::sqrt(norm);
  for (auto& x : v) x /= norm;
  return v;
}

Tensor PseudoEmbedder::embed(std::string_view text) const {
  return Tensor::row(pseudo_embed(text, dim_, seed_));
}

void LookupEmbedder::insert(std::string_view text, std::vector<double> values) {
  if (text.empty()) throw EmptyString("lookup embedding key is empty");
  if (dim_ == 0) dim_ = values.size();
  if (values.size() != dim_ || dim_ == 0) {
    throw DimensionMismatch("lookup embedding for '" + std::string(text) + "' has " +
                            std::to_string(values.size()) + " values, expected " +
                            std::to_string(dim_));
  }
  table_[to_lower(text)] = std::move(values);
}

Tensor LookupEmbedder::embed(std::string_view text) const {
  if (text.empty()) throw EmptyString("cannot embed an empty string");
  auto it = table_.find(to_lower(text));
  if (it == table_.end()) {
    throw OutOfVocabulary("no precomputed embedding for '" + std::string(text) + "'");
  }
  return Tensor::row(it->second);
}

LookupEmbedder LookupEmbedder::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw CorruptFile("cannot open embedding file " + path);
  LookupEmbedder out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    const auto tab = line.find('\t');
    if (tab == std::string::npos) {
      throw CorruptFile(path + ":" + std::to_string(lineno) + ": missing tab separator");
    }
    std::istringstream values(line.substr(tab + 1));
    std::vector<double> v;
    double x;
    while (values >> x) v.push_back(x);
    if (!values.eof()) {
      throw CorruptFile(path + ":" + std::to_string(lineno) + ": bad number");
    }
    out.insert(line.substr(0, tab), std::move(v));
  }
  return out;
}

void LookupEmbedder::save(
    const std::string& path,
    const std::vector<std::pair<std::string, std::vector<double>>>& records) {
  std::ofstream out(path);
  if (!out) throw CorruptFile("cannot write embedding file " + path);
  out << std::setprecision(17);
  for (const auto& [text, values] : records) {
    out << text << '\t';
    for (std::size_t i = 0; i < values.size(); ++i) out << (i ? " " : "") << values[i];
    out << '\n';
  }
}

}  // namespace sempos::data
