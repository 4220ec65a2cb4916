#pragma once

#include <vector>

namespace vdtlab {

// Noise levels visited by the deterministic Euler sampler. sigmas has
// steps()+1 entries, strictly decreasing, ending at >= 0. A single entry
// means zero steps (the sampler returns its input).
struct DenoiseSchedule {
  std::vector<double> sigmas;

  int steps() const { return static_cast<int>(sigmas.size()) - 1; }
  void validate() const;  // ConfigError on empty, non-decreasing, or negative

  // sigma_i = sigma_max * (steps - i) / steps, down to exactly 0.
  static DenoiseSchedule linear(int steps, double sigma_max = 1.0);

  bool operator==(const DenoiseSchedule&) const = default;
};

}  // namespace vdtlab
