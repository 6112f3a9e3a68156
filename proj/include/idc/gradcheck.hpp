#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "idc/config.hpp"

namespace idc {

struct GradcheckOptions {
  Precision precision = Precision::f64;
  std::uint64_t seed = 0;
  std::size_t configs = 20;  // randomized configurations per op
  std::size_t probes = 12;   // coordinates probed per configuration
  // 0 picks the defaults: step 1e-4; threshold 1e-4 at 64-bit, 1e-2 at 32-bit.
  double step = 0;
  double threshold = 0;
};

struct OpReport {
  std::string op;
  double max_rel_error = 0;
  std::size_t probes = 0;
  std::size_t skipped = 0;  // probes whose +-step window crosses a kink
  bool passed = false;
};

struct GradcheckReport {
  std::vector<OpReport> ops;
  double step = 0;
  double threshold = 0;
  double seconds = 0;

  bool passed() const;
};

/// Analytic gradients (at the requested precision) against 64-bit central
/// finite differences for every differentiable op, the extractor, RLFF, the
/// three losses and the composed total loss. Probe error is
/// |a - n| / max(|a|, |n|, 1e-3 * max_probe |n|).
GradcheckReport run_gradcheck(const GradcheckOptions& opts);

}  // namespace idc
