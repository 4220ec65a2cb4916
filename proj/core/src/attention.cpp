#include "vdtlab/attention.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "vdtlab/errors.hpp"

namespace vdtlab {

namespace {

void check_finite(const MatD& m, const char* name) {
  for (std::size_t i = 0; i < m.size(); ++i) {
    if (!std::isfinite(m.data()[i]))
      throw NumericError(std::string(name) + " contains a non-finite value");
  }
}

void apply_mask(MatD& p, double threshold, const AttentionIntervention& iv,
                const AttendTags& tags, MaskStats& stats) {
  if (!(threshold >= 0.0) || threshold > 1.0)
    throw ConfigError("mask threshold must lie in [0, 1]");
  const int n = p.rows();
  stats.total_entries = static_cast<long long>(n) * n;
  for (int i = 0; i < n; ++i) {
    auto row = p.row(i);
    int below = 0;
    int argmax = 0;
    double removed = 0.0;
    for (int j = 0; j < n; ++j) {
      if (row[j] > row[argmax]) argmax = j;
      if (row[j] < threshold) {
        ++below;
        removed += row[j];
      }
    }
    if (below == 0) continue;
    if (below == n) {
      if (iv.strict_degenerate_rows) throw DegenerateRowError(i, tags.head);
      removed -= row[argmax];
      for (int j = 0; j < n; ++j) row[j] = 0.0;
      row[argmax] = 1.0;
      stats.masked_entries += n - 1;
      stats.degenerate_rows += 1;
      stats.removed_mass += removed;
      continue;
    }
    double kept = 0.0;
    for (int j = 0; j < n; ++j) {
      if (row[j] < threshold)
        row[j] = 0.0;
      else
        kept += row[j];
    }
    stats.masked_entries += below;
    stats.removed_mass += removed;
    if (iv.renormalize) {
      for (int j = 0; j < n; ++j) row[j] /= kept;
    }
  }
}

}  // namespace

Attended attend(const MatD& Q, const MatD& K, const MatD& V,
                const AttentionConfig& config,
                const AttentionIntervention& intervention, const AttendTags& tags,
                const MapProbe& probe) {
  if (config.num_heads < 1 || config.head_dim < 1)
    throw ConfigError("attention config requires num_heads >= 1 and head_dim >= 1");
  if (!(config.temperature > 0.0))
    throw ConfigError("attention temperature must be positive");
  const int n = Q.rows();
  const int dk = Q.cols();
  const int dv = V.cols();
  if (n < 1) throw ShapeError("attention requires at least one token");
  if (K.cols() != dk) throw ShapeError("Q and K column counts differ");
  if (K.rows() != n || V.rows() != n) throw ShapeError("Q, K, V row counts differ");
  if (dk != config.head_dim) throw ShapeError("Q column count does not match head_dim");
  check_finite(Q, "Q");
  check_finite(K, "K");
  check_finite(V, "V");

  Attended out;
  out.record.layer = tags.layer;
  out.record.head = tags.head;
  out.record.step = tags.step;

  if (intervention.skip_heads.count(tags.head)) {
    out.record.skipped = true;
    out.output = MatD(n, dv, 0.0);
    return out;
  }

  MatF map;
  if (intervention.map_override) {
    const MatF& ov = *intervention.map_override;
    if (ov.rows() != n || ov.cols() != n)
      throw ShapeError("map override dimensions do not match the sequence length");
    for (int i = 0; i < n; ++i) {
      double sum = 0.0;
      for (int j = 0; j < n; ++j) {
        const float w = ov(i, j);
        if (!(w >= 0.0f) || w > 1.0f)
          throw ContractError("map override entries must lie in [0, 1]");
        sum += w;
      }
      if (std::abs(sum - 1.0) > 1e-6)
        throw ContractError("map override rows must sum to 1");
    }
    map = ov;
  } else {
    const double temperature = intervention.temperature.value_or(config.temperature);
    if (!(temperature > 0.0)) throw ConfigError("attention temperature must be positive");
    if (!std::isfinite(temperature)) throw NumericError("attention temperature is non-finite");
    const double denom = std::sqrt(static_cast<double>(dk)) * temperature;

    MatD p(n, n);
    for (int i = 0; i < n; ++i) {
      auto qi = Q.row(i);
      auto pi = p.row(i);
      double row_max = -std::numeric_limits<double>::infinity();
      for (int j = 0; j < n; ++j) {
        auto kj = K.row(j);
        double dot = 0.0;
        for (int c = 0; c < dk; ++c) dot += qi[c] * kj[c];
        pi[j] = dot / denom;
        if (pi[j] > row_max) row_max = pi[j];
      }
      double sum = 0.0;
      for (int j = 0; j < n; ++j) {
        pi[j] = std::exp(pi[j] - row_max);
        sum += pi[j];
      }
      for (int j = 0; j < n; ++j) pi[j] /= sum;
    }

    if (probe) probe(tags, p);
    if (intervention.mask_threshold)
      apply_mask(p, *intervention.mask_threshold, intervention, tags, out.stats);

    map = MatF(n, n);
    for (std::size_t i = 0; i < p.size(); ++i)
      map.data()[i] = static_cast<float>(p.data()[i]);
  }

  out.output = MatD(n, dv, 0.0);
  for (int i = 0; i < n; ++i) {
    auto oi = out.output.row(i);
    auto mi = map.row(i);
    for (int j = 0; j < n; ++j) {
      const float w32 = mi[j];
      if (w32 == 0.0f) continue;
      const double w = static_cast<double>(w32);
      auto vj = V.row(j);
      for (int c = 0; c < dv; ++c) oi[c] += w * vj[c];
    }
  }

  out.record.map = std::move(map);
  return out;
}

namespace {

template <typename T>
std::vector<double> entropy_impl(const Matrix<T>& m) {
  if (m.rows() < 1 || m.cols() < 1) throw ShapeError("entropy of an empty map is undefined");
  std::vector<double> h(m.rows(), 0.0);
  for (int i = 0; i < m.rows(); ++i) {
    auto row = m.row(i);
    double sum = 0.0;
    double acc = 0.0;
    for (int j = 0; j < m.cols(); ++j) {
      const double p = static_cast<double>(row[j]);
      if (!(p >= 0.0) || p > 1.0 + 1e-6)
        throw ContractError("entropy input entries must lie in [0, 1]");
      sum += p;
      if (p > 0.0) acc -= p * std::log(p);
    }
    if (std::abs(sum - 1.0) > 1e-6)
      throw ContractError("entropy input rows must sum to 1");
    h[i] = acc;
  }
  return h;
}

}  // namespace

std::vector<double> row_entropy(const MatF& map) { return entropy_impl(map); }
std::vector<double> row_entropy(const MatD& map) { return entropy_impl(map); }

}  // namespace vdtlab
