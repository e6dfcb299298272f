#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "brits/tensor.hpp"

namespace brits {

/// One multivariate series with its missingness pattern.
///
/// `values`, `masks`, `eval_values` and `eval_masks` are T x D. Unobserved
/// entries are stored as 0 (`masks` == 0). Entries with `eval_masks` == 1 were
/// observed originally but have been eliminated to serve as imputation ground
/// truth; the model never reads them.
struct TimeSeriesSample {
  Tensor values;
  Tensor masks;
  std::vector<double> timestamps;
  Tensor eval_values;
  Tensor eval_masks;
  std::optional<double> label;

  std::size_t length() const { return values.rows(); }
  std::size_t features() const { return values.cols(); }

  /// Builds a canonical sample with no eval entries.
  static TimeSeriesSample from_observations(Tensor values, Tensor masks,
                                            std::vector<double> timestamps,
                                            std::optional<double> label = std::nullopt);

  friend bool operator==(const TimeSeriesSample&, const TimeSeriesSample&) = default;
};

using Dataset = std::vector<TimeSeriesSample>;

/// Throws DataError when a sample breaks shape, binary-mask, canonical-form
/// or timestamp-ordering invariants.
void validate(const TimeSeriesSample& sample);
void validate(const Dataset& dataset);

std::size_t count_observed(const TimeSeriesSample& sample);
std::size_t count_observed(const Dataset& dataset);
std::size_t count_eval(const Dataset& dataset);

enum class Direction { forward, backward };

/// Time since the last observation of each feature.
///
/// Forward: delta[0] = 0, delta[t] = gap(t) + (mask[t-1] ? 0 : delta[t-1]).
/// Backward: the same recurrence run from the end of the series, using the
/// gap to the following step. Rows are returned in the original time order
/// in both cases.
Tensor compute_deltas(const std::vector<double>& timestamps, const Tensor& masks,
                      Direction direction = Direction::forward);

struct NormalizationStats {
  static constexpr double kStdFloor = 1e-8;

  std::vector<double> mean;
  std::vector<double> std;
};

/// Per-feature mean / population std over observed entries only.
NormalizationStats compute_normalization(const Dataset& dataset);
/// Applies (x - mean) / std to observed values and to eval values. Masked
/// entries stay 0.
Dataset apply_normalization(const Dataset& dataset, const NormalizationStats& stats);
Dataset normalize(const Dataset& dataset, NormalizationStats* stats_out);
double denormalize_value(double v, std::size_t feature, const NormalizationStats& stats);
Tensor denormalize(const Tensor& values, const NormalizationStats& stats);

struct HoldOutResult {
  Dataset dataset;
  std::size_t eliminated = 0;
  std::vector<std::string> warnings;
};

/// Moves round(fraction * #observed) observed entries, chosen uniformly over
/// the whole dataset, into the eval arrays.
HoldOutResult hold_out_with_report(const Dataset& dataset, double fraction, std::uint64_t seed);
Dataset hold_out(const Dataset& dataset, double fraction, std::uint64_t seed);

/// Clears eval_masks / eval_values, leaving observed entries untouched.
Dataset strip_eval(const Dataset& dataset);

/// Local linear trend plus dummy-seasonal state-space series (univariate).
struct SyntheticConfig {
  std::size_t length = 36;
  std::size_t season = 4;
  double noise_std = 0.3;
  double missing_fraction = 0.22;
  double initial_level = 0.0;
  double initial_slope = 0.0;
  /// Seasonal effects preceding the first step, most recent first. Empty
  /// means all zero; otherwise exactly season - 1 values.
  std::vector<double> initial_seasonal;
  std::uint64_t seed = 0;

  void validate() const;
};

/// Per-step state components and the resulting fully observed series.
struct StateSpaceTrace {
  std::vector<double> level;
  std::vector<double> slope;
  std::vector<double> seasonal;
  std::vector<double> x;
};

StateSpaceTrace simulate_state_space(const SyntheticConfig& config);
TimeSeriesSample generate_synthetic(const SyntheticConfig& config);
/// `count` samples; sample i uses a seed derived from config.seed and i.
Dataset generate_synthetic_dataset(const SyntheticConfig& config, std::size_t count);

/// Reverses every per-step array. Timestamps are negated and reversed so that
/// gaps are preserved and a second reversal restores the exact input.
TimeSeriesSample reverse_sample(const TimeSeriesSample& sample);

/// Model-ready view of one direction of a series.
struct SequenceInput {
  Tensor values;
  Tensor masks;
  Tensor deltas;

  std::size_t length() const { return values.rows(); }
  std::size_t features() const { return values.cols(); }
};

/// Both directions of a sample, precomputed once for repeated training passes.
struct PreparedSample {
  SequenceInput forward;
  SequenceInput backward;  // time-reversed
  std::optional<double> label;
};

PreparedSample prepare(const TimeSeriesSample& sample);
std::vector<PreparedSample> prepare(const Dataset& dataset);

}  // namespace brits
