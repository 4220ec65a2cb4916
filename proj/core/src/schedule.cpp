#include "vdtlab/schedule.hpp"

#include <cmath>

#include "vdtlab/errors.hpp"

namespace vdtlab {

void DenoiseSchedule::validate() const {
  if (sigmas.empty()) throw ConfigError("schedule requires at least one noise level");
  for (std::size_t i = 0; i < sigmas.size(); ++i) {
    if (!std::isfinite(sigmas[i])) throw ConfigError("schedule noise levels must be finite");
    if (i + 1 < sigmas.size() && !(sigmas[i] > sigmas[i + 1]))
      throw ConfigError("schedule noise levels must be strictly decreasing");
  }
  if (sigmas.back() < 0.0) throw ConfigError("schedule noise levels must be nonnegative");
}

DenoiseSchedule DenoiseSchedule::linear(int steps, double sigma_max) {
  if (steps < 0) throw ConfigError("schedule step count must be nonnegative");
  if (!(sigma_max > 0.0)) throw ConfigError("schedule sigma_max must be positive");
  DenoiseSchedule s;
  if (steps == 0) {
    s.sigmas = {sigma_max};
    return s;
  }
  s.sigmas.resize(steps + 1);
  for (int i = 0; i <= steps; ++i)
    s.sigmas[i] = sigma_max * (static_cast<double>(steps - i) / steps);
  return s;
}

}  // namespace vdtlab
