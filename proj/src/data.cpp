#include "brits/data.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <sstream>

namespace brits {

TimeSeriesSample TimeSeriesSample::from_observations(Tensor values, Tensor masks,
                                                     std::vector<double> timestamps,
                                                     std::optional<double> label) {
  TimeSeriesSample s;
  s.eval_values = Tensor(values.rows(), values.cols());
  s.eval_masks = Tensor(values.rows(), values.cols());
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (masks[i] == 0.0) values[i] = 0.0;
  }
  s.values = std::move(values);
  s.masks = std::move(masks);
  s.timestamps = std::move(timestamps);
  s.label = label;
  return s;
}

namespace {

bool is_binary(double v) { return v == 0.0 || v == 1.0; }

void check_increasing(const std::vector<double>& timestamps) {
  for (std::size_t t = 1; t < timestamps.size(); ++t) {
    if (!(timestamps[t] > timestamps[t - 1])) {
      std::ostringstream os;
      os << "timestamps must be strictly increasing (step " << t << ": " << timestamps[t - 1]
         << " -> " << timestamps[t] << ")";
      throw DataError(os.str());
    }
  }
}

}  // namespace

void validate(const TimeSeriesSample& s) {
  const std::size_t T = s.values.rows(), D = s.values.cols();
  if (T == 0 || D == 0) throw DataError("sample has an empty value matrix");
  if (!s.masks.same_shape(s.values) || !s.eval_values.same_shape(s.values) ||
      !s.eval_masks.same_shape(s.values)) {
    throw DataError("sample arrays disagree in shape: values " + s.values.shape_string() +
                    ", masks " + s.masks.shape_string() + ", eval_values " +
                    s.eval_values.shape_string() + ", eval_masks " + s.eval_masks.shape_string());
  }
  if (s.timestamps.size() != T) {
    throw DataError("sample has " + std::to_string(s.timestamps.size()) + " timestamps for " +
                    std::to_string(T) + " steps");
  }
  check_increasing(s.timestamps);
  for (std::size_t i = 0; i < s.values.size(); ++i) {
    if (!is_binary(s.masks[i]) || !is_binary(s.eval_masks[i])) {
      throw DataError("mask entries must be 0 or 1");
    }
    if (!std::isfinite(s.values[i]) || !std::isfinite(s.eval_values[i])) {
      throw DataError("sample contains non-finite values");
    }
    if (s.masks[i] == 0.0 && s.values[i] != 0.0) {
      throw DataError("unobserved entries must be stored as 0");
    }
    if (s.eval_masks[i] == 1.0 && s.masks[i] == 1.0) {
      throw DataError("eval entries must be hidden from the observed mask");
    }
  }
}

void validate(const Dataset& dataset) {
  if (dataset.empty()) throw DataError("dataset is empty");
  const std::size_t D = dataset.front().features();
  for (std::size_t i = 0; i < dataset.size(); ++i) {
    try {
      validate(dataset[i]);
    } catch (const DataError& e) {
      throw DataError("sample " + std::to_string(i) + ": " + e.what());
    }
    if (dataset[i].features() != D) {
      throw DataError("sample " + std::to_string(i) + " has " +
                      std::to_string(dataset[i].features()) + " features, expected " +
                      std::to_string(D));
    }
  }
}

std::size_t count_observed(const TimeSeriesSample& sample) {
  return static_cast<std::size_t>(
      std::count(sample.masks.data().begin(), sample.masks.data().end(), 1.0));
}

std::size_t count_observed(const Dataset& dataset) {
  std::size_t n = 0;
  for (const auto& s : dataset) n += count_observed(s);
  return n;
}

std::size_t count_eval(const Dataset& dataset) {
  std::size_t n = 0;
  for (const auto& s : dataset) {
    n += static_cast<std::size_t>(
        std::count(s.eval_masks.data().begin(), s.eval_masks.data().end(), 1.0));
  }
  return n;
}

Tensor compute_deltas(const std::vector<double>& timestamps, const Tensor& masks,
                      Direction direction) {
  const std::size_t T = masks.rows(), D = masks.cols();
  if (timestamps.size() != T) throw DataError("compute_deltas: timestamp count mismatch");
  check_increasing(timestamps);
  for (double m : masks.data()) {
    if (!is_binary(m)) throw DataError("compute_deltas: masks must be binary");
  }

  Tensor deltas(T, D);
  if (T == 0) return deltas;
  if (direction == Direction::forward) {
    for (std::size_t t = 1; t < T; ++t) {
      const double gap = timestamps[t] - timestamps[t - 1];
      for (std::size_t d = 0; d < D; ++d) {
        deltas(t, d) = masks(t - 1, d) == 1.0 ? gap : gap + deltas(t - 1, d);
      }
    }
  } else {
    for (std::size_t t = T - 1; t-- > 0;) {
      const double gap = timestamps[t + 1] - timestamps[t];
      for (std::size_t d = 0; d < D; ++d) {
        deltas(t, d) = masks(t + 1, d) == 1.0 ? gap : gap + deltas(t + 1, d);
      }
    }
  }
  return deltas;
}

NormalizationStats compute_normalization(const Dataset& dataset) {
  if (dataset.empty()) throw DataError("cannot normalize an empty dataset");
  const std::size_t D = dataset.front().features();
  std::vector<double> sum(D, 0.0);
  std::vector<std::size_t> count(D, 0);
  for (const auto& s : dataset) {
    for (std::size_t t = 0; t < s.length(); ++t) {
      for (std::size_t d = 0; d < D; ++d) {
        if (s.masks(t, d) == 1.0) {
          sum[d] += s.values(t, d);
          ++count[d];
        }
      }
    }
  }
  NormalizationStats stats;
  stats.mean.resize(D);
  stats.std.resize(D);
  for (std::size_t d = 0; d < D; ++d) {
    if (count[d] == 0) {
      throw DataError("feature " + std::to_string(d) + " has no observed values");
    }
    stats.mean[d] = sum[d] / static_cast<double>(count[d]);
  }
  std::vector<double> sq(D, 0.0);
  for (const auto& s : dataset) {
    for (std::size_t t = 0; t < s.length(); ++t) {
      for (std::size_t d = 0; d < D; ++d) {
        if (s.masks(t, d) == 1.0) {
          const double r = s.values(t, d) - stats.mean[d];
          sq[d] += r * r;
        }
      }
    }
  }
  for (std::size_t d = 0; d < D; ++d) {
    stats.std[d] =
        std::max(std::sqrt(sq[d] / static_cast<double>(count[d])), NormalizationStats::kStdFloor);
  }
  return stats;
}

Dataset apply_normalization(const Dataset& dataset, const NormalizationStats& stats) {
  Dataset out = dataset;
  for (auto& s : out) {
    if (s.features() != stats.mean.size()) {
      throw DataError("normalization stats have " + std::to_string(stats.mean.size()) +
                      " features, sample has " + std::to_string(s.features()));
    }
    for (std::size_t t = 0; t < s.length(); ++t) {
      for (std::size_t d = 0; d < s.features(); ++d) {
        if (s.masks(t, d) == 1.0) s.values(t, d) = (s.values(t, d) - stats.mean[d]) / stats.std[d];
        if (s.eval_masks(t, d) == 1.0) {
          s.eval_values(t, d) = (s.eval_values(t, d) - stats.mean[d]) / stats.std[d];
        }
      }
    }
  }
  return out;
}

Dataset normalize(const Dataset& dataset, NormalizationStats* stats_out) {
  NormalizationStats stats = compute_normalization(dataset);
  Dataset out = apply_normalization(dataset, stats);
  if (stats_out != nullptr) *stats_out = std::move(stats);
  return out;
}

double denormalize_value(double v, std::size_t feature, const NormalizationStats& stats) {
  return v * stats.std[feature] + stats.mean[feature];
}

Tensor denormalize(const Tensor& values, const NormalizationStats& stats) {
  if (values.cols() != stats.mean.size()) throw DataError("denormalize: feature count mismatch");
  Tensor out = values;
  for (std::size_t t = 0; t < out.rows(); ++t) {
    for (std::size_t d = 0; d < out.cols(); ++d) out(t, d) = denormalize_value(out(t, d), d, stats);
  }
  return out;
}

HoldOutResult hold_out_with_report(const Dataset& dataset, double fraction, std::uint64_t seed) {
  if (!(fraction > 0.0 && fraction < 1.0)) {
    throw DataError("hold-out fraction must lie in (0, 1), got " + std::to_string(fraction));
  }
  struct Position {
    std::size_t sample, t, d;
  };
  std::vector<Position> observed;
  for (std::size_t i = 0; i < dataset.size(); ++i) {
    const auto& s = dataset[i];
    for (std::size_t t = 0; t < s.length(); ++t) {
      for (std::size_t d = 0; d < s.features(); ++d) {
        if (s.masks(t, d) == 1.0) observed.push_back({i, t, d});
      }
    }
  }
  const auto n_pick =
      static_cast<std::size_t>(std::llround(fraction * static_cast<double>(observed.size())));

  std::mt19937_64 rng(seed);
  std::shuffle(observed.begin(), observed.end(), rng);

  HoldOutResult result;
  result.dataset = dataset;
  result.eliminated = n_pick;
  for (std::size_t k = 0; k < n_pick; ++k) {
    const Position& p = observed[k];
    auto& s = result.dataset[p.sample];
    s.eval_values(p.t, p.d) = s.values(p.t, p.d);
    s.eval_masks(p.t, p.d) = 1.0;
    s.values(p.t, p.d) = 0.0;
    s.masks(p.t, p.d) = 0.0;
  }
  for (std::size_t i = 0; i < result.dataset.size(); ++i) {
    if (count_observed(dataset[i]) > 0 && count_observed(result.dataset[i]) == 0) {
      result.warnings.push_back("sample " + std::to_string(i) +
                                " has no observed entries left after hold-out");
    }
  }
  return result;
}

Dataset hold_out(const Dataset& dataset, double fraction, std::uint64_t seed) {
  return hold_out_with_report(dataset, fraction, seed).dataset;
}

Dataset strip_eval(const Dataset& dataset) {
  Dataset out = dataset;
  for (auto& s : out) {
    s.eval_values.fill(0.0);
    s.eval_masks.fill(0.0);
  }
  return out;
}

void SyntheticConfig::validate() const {
  if (length < 1) throw DataError("synthetic length must be at least 1");
  if (season < 2) throw DataError("synthetic season must be at least 2");
  if (!(missing_fraction >= 0.0 && missing_fraction < 1.0)) {
    throw DataError("synthetic missing fraction must lie in [0, 1)");
  }
  if (!(noise_std >= 0.0)) throw DataError("synthetic noise std must be nonnegative");
  if (!initial_seasonal.empty() && initial_seasonal.size() != season - 1) {
    throw DataError("initial seasonal state needs season - 1 values");
  }
}

StateSpaceTrace simulate_state_space(const SyntheticConfig& config) {
  config.validate();
  std::mt19937_64 rng(config.seed);
  std::normal_distribution<double> unit(0.0, 1.0);
  auto draw = [&] { return config.noise_std * unit(rng); };

  double level = config.initial_level;
  double slope = config.initial_slope;
  // Seasonal history, most recent first.
  std::vector<double> history = config.initial_seasonal;
  if (history.empty()) history.assign(config.season - 1, 0.0);

  StateSpaceTrace trace;
  for (std::size_t t = 0; t < config.length; ++t) {
    const double next_level = level + slope + draw();
    slope += draw();
    level = next_level;

    double theta = draw();
    for (double past : history) theta -= past;
    std::rotate(history.rbegin(), history.rbegin() + 1, history.rend());
    history.front() = theta;

    trace.level.push_back(level);
    trace.slope.push_back(slope);
    trace.seasonal.push_back(theta);
    trace.x.push_back(level + theta + draw());
  }
  return trace;
}

TimeSeriesSample generate_synthetic(const SyntheticConfig& config) {
  const std::vector<double> x = simulate_state_space(config).x;
  const std::size_t T = x.size();
  std::vector<double> timestamps(T);
  std::iota(timestamps.begin(), timestamps.end(), 0.0);
  TimeSeriesSample sample =
      TimeSeriesSample::from_observations(Tensor(T, 1, x), Tensor(T, 1, 1.0), std::move(timestamps));
  if (config.missing_fraction > 0.0) {
    // Elimination draws from its own stream so that the series itself does
    // not depend on the missing fraction.
    sample = hold_out({sample}, config.missing_fraction, config.seed ^ 0x9e3779b97f4a7c15ULL).front();
  }
  return sample;
}

Dataset generate_synthetic_dataset(const SyntheticConfig& config, std::size_t count) {
  config.validate();
  std::mt19937_64 seeder(config.seed);
  Dataset out;
  out.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    SyntheticConfig c = config;
    c.seed = seeder();
    out.push_back(generate_synthetic(c));
  }
  return out;
}

TimeSeriesSample reverse_sample(const TimeSeriesSample& sample) {
  const std::size_t T = sample.length(), D = sample.features();
  auto flip = [T, D](const Tensor& in) {
    Tensor out(T, D);
    for (std::size_t t = 0; t < T; ++t) {
      for (std::size_t d = 0; d < D; ++d) out(t, d) = in(T - 1 - t, d);
    }
    return out;
  };
  TimeSeriesSample r;
  r.values = flip(sample.values);
  r.masks = flip(sample.masks);
  r.eval_values = flip(sample.eval_values);
  r.eval_masks = flip(sample.eval_masks);
  r.timestamps.resize(T);
  for (std::size_t t = 0; t < T; ++t) r.timestamps[t] = -sample.timestamps[T - 1 - t];
  r.label = sample.label;
  return r;
}

PreparedSample prepare(const TimeSeriesSample& sample) {
  validate(sample);
  PreparedSample p;
  p.forward = {sample.values, sample.masks,
               compute_deltas(sample.timestamps, sample.masks, Direction::forward)};
  const TimeSeriesSample r = reverse_sample(sample);
  p.backward = {r.values, r.masks, compute_deltas(r.timestamps, r.masks, Direction::forward)};
  p.label = sample.label;
  return p;
}

std::vector<PreparedSample> prepare(const Dataset& dataset) {
  std::vector<PreparedSample> out;
  out.reserve(dataset.size());
  for (const auto& s : dataset) out.push_back(prepare(s));
  return out;
}

}  // namespace brits
