#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

namespace sempos::check {

struct GradCheckResult {
  std::string name;
  double max_rel_error = 0.0;
  std::size_t parameters = 0;  // scalar parameters in the checked function
};

struct SuiteOptions {
  std::uint64_t seed = 42;
  std::size_t frames = 3;   // T
  std::size_t hidden = 4;   // H
  std::size_t embedding = 4;  // E
  std::size_t feature_dim = 4;
  std::size_t objects = 2;
  // Coordinates probed per parameter tensor in end-to-end checks; 0 probes all.
  std::size_t coords_per_tensor = 0;
};

// Central-difference checks of every layer and of the full model under each
// wiring: full, without each POS block, without the GLFB and without the VFM.
// Masked wirings are checked in train mode with a mask reseeded per call.
std::vector<GradCheckResult> run_gradient_suite(const SuiteOptions& options = {});

}  // namespace sempos::check
