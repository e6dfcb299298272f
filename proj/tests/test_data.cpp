#include <doctest.h>

#include <cmath>
#include <random>

#include "brits/data.hpp"
#include "support.hpp"

using namespace brits;

namespace {

// Worked example: six steps, three features; feature 2 observed only at the
// first two steps.
TimeSeriesSample worked_example() {
  const std::vector<double> s = {0, 2, 7, 9, 14, 15};
  Tensor values(6, 3), masks(6, 3);
  const double m[6][3] = {{1, 1, 0}, {0, 1, 1}, {1, 0, 0}, {0, 0, 1}, {1, 0, 0}, {1, 0, 1}};
  for (std::size_t t = 0; t < 6; ++t) {
    for (std::size_t d = 0; d < 3; ++d) {
      masks(t, d) = m[t][d];
      values(t, d) = m[t][d] * (1.0 + t + 10.0 * d);
    }
  }
  return TimeSeriesSample::from_observations(values, masks, s);
}

// Time since the most recent earlier observation, or since the first step.
Tensor scan_deltas(const std::vector<double>& s, const Tensor& masks) {
  Tensor out(masks.rows(), masks.cols());
  for (std::size_t d = 0; d < masks.cols(); ++d) {
    for (std::size_t t = 1; t < masks.rows(); ++t) {
      std::size_t last = 0;
      for (std::size_t j = 0; j < t; ++j) {
        if (masks(j, d) == 1.0) last = j;
      }
      out(t, d) = s[t] - s[last];
    }
  }
  return out;
}

}  // namespace

TEST_CASE("worked example deltas") {
  const TimeSeriesSample sample = worked_example();
  const Tensor fwd = compute_deltas(sample.timestamps, sample.masks, Direction::forward);
  CHECK(fwd(5, 1) == 13.0);
  for (std::size_t d = 0; d < 3; ++d) CHECK(fwd(0, d) == 0.0);
  CHECK(fwd == scan_deltas(sample.timestamps, sample.masks));

  const Tensor bwd = compute_deltas(sample.timestamps, sample.masks, Direction::backward);
  CHECK(bwd(1, 1) == 13.0);
  // Computing on the reversed sample gives the same numbers, reversed.
  const TimeSeriesSample rev = reverse_sample(sample);
  const Tensor via_rev = compute_deltas(rev.timestamps, rev.masks, Direction::forward);
  for (std::size_t t = 0; t < 6; ++t) {
    for (std::size_t d = 0; d < 3; ++d) CHECK(bwd(t, d) == via_rev(5 - t, d));
  }
}

TEST_CASE("fully observed unit spacing gives unit deltas") {
  const std::vector<double> s = {0, 1, 2, 3, 4};
  const Tensor d = compute_deltas(s, Tensor(5, 2, 1.0));
  for (std::size_t t = 1; t < 5; ++t) {
    CHECK(d(t, 0) == 1.0);
    CHECK(d(t, 1) == 1.0);
  }
}

TEST_CASE("forward deltas on a fully observed series are first differences") {
  const std::vector<double> s = {0.5, 1.25, 4.0, 4.5, 10.0};
  const Tensor d = compute_deltas(s, Tensor(5, 1, 1.0));
  for (std::size_t t = 1; t < 5; ++t) CHECK(d(t, 0) == s[t] - s[t - 1]);
}

TEST_CASE("deltas match the scan oracle on random patterns") {
  std::mt19937_64 rng(17);
  for (int trial = 0; trial < 200; ++trial) {
    const TimeSeriesSample s = testing::random_sample(9, 2, rng, 0.5);
    const Tensor got = compute_deltas(s.timestamps, s.masks);
    const Tensor want = scan_deltas(s.timestamps, s.masks);
    // The recurrence sums gaps, the oracle subtracts endpoints.
    for (std::size_t k = 0; k < got.size(); ++k) CHECK(std::fabs(got[k] - want[k]) <= 1e-12);
  }
}

TEST_CASE("regular sampling deltas are exact step counts") {
  std::mt19937_64 rng(18);
  std::bernoulli_distribution observed(0.6);
  std::vector<double> s(12);
  for (std::size_t t = 0; t < 12; ++t) s[t] = static_cast<double>(t);
  for (int trial = 0; trial < 200; ++trial) {
    Tensor m(12, 3);
    for (double& v : m.data()) v = observed(rng) ? 1.0 : 0.0;
    CHECK(compute_deltas(s, m) == scan_deltas(s, m));
  }
}

TEST_CASE("non-increasing timestamps are rejected") {
  CHECK_THROWS_AS(compute_deltas({0, 1, 1}, Tensor(3, 1, 1.0)), DataError);
  TimeSeriesSample bad = TimeSeriesSample::from_observations(Tensor(2, 1), Tensor(2, 1, 1.0), {3, 1});
  CHECK_THROWS_AS(validate(bad), DataError);
}

TEST_CASE("normalization of 1 2 3") {
  Tensor v(3, 1, std::vector<double>{1, 2, 3});
  const Dataset ds = {TimeSeriesSample::from_observations(v, Tensor(3, 1, 1.0), {0, 1, 2})};
  NormalizationStats stats;
  const Dataset n = normalize(ds, &stats);
  CHECK(stats.mean[0] == doctest::Approx(2.0));
  CHECK(stats.std[0] == doctest::Approx(std::sqrt(2.0 / 3.0)));
  CHECK(n[0].values(0, 0) == doctest::Approx(-1.2247448714).epsilon(1e-9));
  CHECK(n[0].values(1, 0) == doctest::Approx(0.0));
  CHECK(n[0].values(2, 0) == doctest::Approx(1.2247448714).epsilon(1e-9));
}

TEST_CASE("normalization ignores masked entries and keeps them zero") {
  Tensor v(3, 1, std::vector<double>{1, 0, 3});
  Tensor m(3, 1, std::vector<double>{1, 0, 1});
  const Dataset ds = {TimeSeriesSample::from_observations(v, m, {0, 1, 2})};
  NormalizationStats stats;
  const Dataset n = normalize(ds, &stats);
  CHECK(stats.mean[0] == 2.0);
  CHECK(stats.std[0] == 1.0);
  CHECK(n[0].values(1, 0) == 0.0);
}

TEST_CASE("standardized data is left unchanged") {
  Tensor v(4, 1, std::vector<double>{-1, 1, -1, 1});
  const Dataset ds = {TimeSeriesSample::from_observations(v, Tensor(4, 1, 1.0), {0, 1, 2, 3})};
  const Dataset n = normalize(ds, nullptr);
  for (std::size_t t = 0; t < 4; ++t) CHECK(std::fabs(n[0].values(t, 0) - v(t, 0)) <= 1e-12);
}

TEST_CASE("constant feature uses the std floor") {
  Tensor v(3, 1, 4.0);
  const Dataset ds = {TimeSeriesSample::from_observations(v, Tensor(3, 1, 1.0), {0, 1, 2})};
  NormalizationStats stats;
  const Dataset n = normalize(ds, &stats);
  CHECK(stats.std[0] == NormalizationStats::kStdFloor);
  for (std::size_t t = 0; t < 3; ++t) CHECK(n[0].values(t, 0) == 0.0);
}

TEST_CASE("denormalize inverts normalize on observed entries") {
  std::mt19937_64 rng(4);
  Dataset ds;
  for (int i = 0; i < 5; ++i) ds.push_back(testing::random_sample(7, 3, rng, 0.3));
  NormalizationStats stats;
  const Dataset n = normalize(ds, &stats);
  for (std::size_t i = 0; i < ds.size(); ++i) {
    const Tensor back = denormalize(n[i].values, stats);
    for (std::size_t k = 0; k < back.size(); ++k) {
      if (ds[i].masks[k] == 1.0) CHECK(std::fabs(back[k] - ds[i].values[k]) <= 1e-10);
    }
  }
}

TEST_CASE("hold out eliminates an exact count") {
  Dataset ds;
  for (int i = 0; i < 10; ++i) {
    ds.push_back(TimeSeriesSample::from_observations(Tensor(5, 2, 1.5), Tensor(5, 2, 1.0),
                                                     {0, 1, 2, 3, 4}));
  }
  REQUIRE(count_observed(ds) == 100);
  const Dataset out = hold_out(ds, 0.10, 42);
  CHECK(count_eval(out) == 10);
  CHECK(count_observed(out) == 90);
  CHECK(out == hold_out(ds, 0.10, 42));
  for (const auto& s : out) {
    for (std::size_t k = 0; k < s.values.size(); ++k) {
      if (s.eval_masks[k] == 1.0) {
        CHECK(s.masks[k] == 0.0);
        CHECK(s.values[k] == 0.0);
        CHECK(s.eval_values[k] == 1.5);
      }
    }
  }
}

TEST_CASE("hold out preserves the observed count on random data") {
  std::mt19937_64 rng(8);
  Dataset ds;
  for (int i = 0; i < 6; ++i) ds.push_back(testing::random_sample(11, 2, rng, 0.4));
  const std::size_t before = count_observed(ds);
  const Dataset out = hold_out(ds, 0.3, 1);
  CHECK(before == count_observed(out) + count_eval(out));
  CHECK(count_eval(out) == static_cast<std::size_t>(std::llround(0.3 * before)));
}

TEST_CASE("synthetic generator at zero noise is identically zero") {
  SyntheticConfig c;
  c.noise_std = 0.0;
  c.missing_fraction = 0.0;
  const TimeSeriesSample s = generate_synthetic(c);
  for (double v : s.values.data()) CHECK(v == 0.0);
}

TEST_CASE("seasonal components sum to zero over a season without disturbance") {
  SyntheticConfig c;
  c.noise_std = 0.0;
  c.season = 5;
  c.initial_seasonal = {1.0, -0.5, 2.0, 0.25};
  const StateSpaceTrace tr = simulate_state_space(c);
  for (std::size_t t = c.season - 1; t < c.length; ++t) {
    double sum = 0.0;
    for (std::size_t j = 0; j < c.season; ++j) sum += tr.seasonal[t - j];
    CHECK(std::fabs(sum) <= 1e-12);
  }
}

TEST_CASE("synthetic default shape and elimination") {
  SyntheticConfig c;
  c.seed = 7;
  const Dataset ds = generate_synthetic_dataset(c, 50);
  std::size_t eval = 0;
  for (const auto& s : ds) {
    CHECK(s.length() == 36);
    CHECK(s.features() == 1);
    eval += static_cast<std::size_t>(std::count(s.eval_masks.data().begin(), s.eval_masks.data().end(), 1.0));
    validate(s);
  }
  const double fraction = static_cast<double>(eval) / (50.0 * 36.0);
  CHECK(fraction == doctest::Approx(0.22).epsilon(0.02));
  CHECK(ds == generate_synthetic_dataset(c, 50));
  c.seed = 8;
  CHECK(ds != generate_synthetic_dataset(c, 50));
}

TEST_CASE("reversal is an involution") {
  std::mt19937_64 rng(2);
  const TimeSeriesSample s = testing::random_sample(8, 3, rng, 0.3, 1.0);
  const TimeSeriesSample r = reverse_sample(s);
  CHECK(r.values(0, 1) == s.values(7, 1));
  CHECK(reverse_sample(r) == s);
  const PreparedSample p = prepare(s);
  CHECK(p.backward.deltas == compute_deltas(r.timestamps, r.masks));
}

TEST_CASE("single step reversal is the identity apart from the timestamp sign") {
  const TimeSeriesSample s =
      TimeSeriesSample::from_observations(Tensor(1, 2, 3.0), Tensor(1, 2, 1.0), {0.0});
  const TimeSeriesSample r = reverse_sample(s);
  CHECK(r.values == s.values);
  CHECK(r.masks == s.masks);
  CHECK(r.timestamps[0] == 0.0);
}

TEST_CASE("validation rejects non-canonical samples") {
  TimeSeriesSample s = TimeSeriesSample::from_observations(Tensor(2, 1, 1.0), Tensor(2, 1, 1.0), {0, 1});
  s.masks(0, 0) = 0.0;  // value left nonzero
  CHECK_THROWS_AS(validate(s), DataError);
  s.values(0, 0) = 0.0;
  validate(s);
  s.masks(1, 0) = 0.5;
  CHECK_THROWS_AS(validate(s), DataError);
}
