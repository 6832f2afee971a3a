#include <doctest.h>

#include <boost/math/distributions/chi_squared.hpp>
#include <cmath>
#include <vector>

#include "sempos/rng.hpp"

using sempos::Rng;

TEST_CASE("same seed gives the same stream") {
  Rng a(99), b(99);
  for (int i = 0; i < 100; ++i) CHECK(a.next_u64() == b.next_u64());
}

TEST_CASE("substreams are stable, named and do not advance the parent") {
  Rng root(5);
  Rng s1 = root.substream("mask");
  Rng s2 = root.substream("mask");
  Rng other = root.substream("shuffle");
  CHECK(s1.next_u64() == s2.next_u64());
  CHECK(root.substream("mask").next_u64() != other.next_u64());
  Rng fresh(5);
  CHECK(root.next_u64() == fresh.next_u64());
}

TEST_CASE("hash_string is FNV-1a") {
  // Published FNV-1a 64-bit test vectors.
  CHECK(sempos::hash_string("") == 0xcbf29ce484222325ull);
  CHECK(sempos::hash_string("a") == 0xaf63dc4c8601ec8cull);
  CHECK(sempos::hash_string("foobar") == 0x85944171f73967e8ull);
}

TEST_CASE("uniform draws stay in [0, 1) and have mean near 1/2") {
  Rng rng(3);
  double sum = 0.0;
  const int n = 20000;
  for (int i = 0; i < n; ++i) {
    const double u = rng.uniform();
    REQUIRE(u >= 0.0);
    REQUIRE(u < 1.0);
    sum += u;
  }
  // Standard error of the mean is sqrt(1/12/n) ~ 0.002.
  CHECK(std::abs(sum / n - 0.5) < 0.01);
}

TEST_CASE("uniform_index is uniform by chi-square") {
  Rng rng(11);
  const std::size_t k = 7, n = 7000;
  std::vector<double> counts(k, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    const auto j = rng.uniform_index(k);
    REQUIRE(j < k);
    counts[j] += 1.0;
  }
  double stat = 0.0;
  const double expected = static_cast<double>(n) / k;
  for (double c : counts) stat += (c - expected) * (c - expected) / expected;
  boost::math::chi_squared dist(static_cast<double>(k - 1));
  CHECK(boost::math::cdf(boost::math::complement(dist, stat)) > 0.01);
}

TEST_CASE("normal draws have unit variance") {
  Rng rng(17);
  const int n = 40000;
  double s1 = 0.0, s2 = 0.0;
  for (int i = 0; i < n; ++i) {
    const double z = rng.normal();
    REQUIRE(std::isfinite(z));
    s1 += z;
    s2 += z * z;
  }
  const double mean = s1 / n;
  CHECK(std::abs(mean) < 0.03);
  CHECK(std::abs(s2 / n - mean * mean - 1.0) < 0.05);
}
