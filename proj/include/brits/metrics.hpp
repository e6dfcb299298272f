#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "brits/data.hpp"

namespace brits {

/// sum |pred - truth| / N over entries with mask == 1.
double mae(std::span<const double> pred, std::span<const double> truth,
           std::span<const double> mask);
/// sum |pred - truth| / sum |truth| over entries with mask == 1.
double mre(std::span<const double> pred, std::span<const double> truth,
           std::span<const double> mask);

/// Rank statistic: probability that a random positive scores above a random
/// negative, ties counting one half. Labels are 0/1.
double auc(std::span<const double> scores, std::span<const double> labels);
/// Area under the empirical ROC curve by the trapezoid rule. Agrees with
/// auc() on every input; kept as an independent cross-check.
double auc_trapezoid(std::span<const double> scores, std::span<const double> labels);

double accuracy(std::span<const std::size_t> predicted, std::span<const std::size_t> labels);

struct MeanStd {
  double mean = 0.0;
  double std = 0.0;  // sample standard deviation (n - 1); 0 for one value

  /// "0.850 ± 0.002"
  std::string format(int decimals = 3) const;
};

MeanStd mean_std(std::span<const double> values);

struct ImputationScore {
  double mae = 0.0;
  double mre = 0.0;
  std::size_t count = 0;
};

/// Scores `imputations` (one T x D matrix per sample, same space as the
/// dataset) against the dataset's eval entries. Throws DataError when there
/// are no eval entries.
ImputationScore score_eval_entries(const Dataset& dataset, const std::vector<Tensor>& imputations);

}  // namespace brits
