#include "brits/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>

namespace brits {

namespace {

void check_lengths(std::size_t a, std::size_t b, std::size_t c, const char* what) {
  if (a != b || a != c) throw DataError(std::string(what) + ": input lengths differ");
}

}  // namespace

double mae(std::span<const double> pred, std::span<const double> truth,
           std::span<const double> mask) {
  check_lengths(pred.size(), truth.size(), mask.size(), "mae");
  double err = 0.0;
  std::size_t n = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    if (mask[i] != 1.0) continue;
    err += std::fabs(pred[i] - truth[i]);
    ++n;
  }
  if (n == 0) throw DataError("mae: no entries selected");
  return err / static_cast<double>(n);
}

double mre(std::span<const double> pred, std::span<const double> truth,
           std::span<const double> mask) {
  check_lengths(pred.size(), truth.size(), mask.size(), "mre");
  double err = 0.0;
  double denom = 0.0;
  std::size_t n = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    if (mask[i] != 1.0) continue;
    err += std::fabs(pred[i] - truth[i]);
    denom += std::fabs(truth[i]);
    ++n;
  }
  if (n == 0) throw DataError("mre: no entries selected");
  if (denom == 0.0) throw DataError("mre: selected ground truth sums to zero");
  return err / denom;
}

double auc(std::span<const double> scores, std::span<const double> labels) {
  if (scores.size() != labels.size()) throw DataError("auc: input lengths differ");
  const std::size_t n = scores.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });

  // Midranks (1-based) so that ties contribute one half.
  double positive_rank_sum = 0.0;
  std::size_t positives = 0;
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    while (j < n && scores[order[j]] == scores[order[i]]) ++j;
    const double midrank = (static_cast<double>(i + 1) + static_cast<double>(j)) / 2.0;
    for (std::size_t k = i; k < j; ++k) {
      if (labels[order[k]] == 1.0) {
        positive_rank_sum += midrank;
        ++positives;
      } else if (labels[order[k]] != 0.0) {
        throw DataError("auc: labels must be 0 or 1");
      }
    }
    i = j;
  }
  const std::size_t negatives = n - positives;
  if (positives == 0 || negatives == 0) throw DataError("auc: both classes must be present");
  const double np = static_cast<double>(positives), nn = static_cast<double>(negatives);
  return (positive_rank_sum - np * (np + 1.0) / 2.0) / (np * nn);
}

double auc_trapezoid(std::span<const double> scores, std::span<const double> labels) {
  if (scores.size() != labels.size()) throw DataError("auc: input lengths differ");
  const std::size_t n = scores.size();
  double positives = 0.0;
  for (double l : labels) {
    if (l != 0.0 && l != 1.0) throw DataError("auc: labels must be 0 or 1");
    positives += l;
  }
  const double negatives = static_cast<double>(n) - positives;
  if (positives == 0.0 || negatives == 0.0) throw DataError("auc: both classes must be present");

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });

  // Sweep the threshold from high to low; tied scores move together, which
  // produces the diagonal segment responsible for the one-half tie credit.
  double area = 0.0, tp = 0.0, fp = 0.0;
  for (std::size_t i = 0; i < n;) {
    double tp_next = tp, fp_next = fp;
    std::size_t j = i;
    while (j < n && scores[order[j]] == scores[order[i]]) {
      if (labels[order[j]] == 1.0) tp_next += 1.0;
      else fp_next += 1.0;
      ++j;
    }
    area += (fp_next - fp) / negatives * (tp + tp_next) / (2.0 * positives);
    tp = tp_next;
    fp = fp_next;
    i = j;
  }
  return area;
}

double accuracy(std::span<const std::size_t> predicted, std::span<const std::size_t> labels) {
  if (predicted.size() != labels.size()) throw DataError("accuracy: input lengths differ");
  if (predicted.empty()) throw DataError("accuracy: no predictions");
  std::size_t hits = 0;
  for (std::size_t i = 0; i < predicted.size(); ++i) hits += predicted[i] == labels[i] ? 1 : 0;
  return static_cast<double>(hits) / static_cast<double>(predicted.size());
}

std::string MeanStd::format(int decimals) const {
  char buf[96];
  std::snprintf(buf, sizeof buf, "%.*f ± %.*f", decimals, mean, decimals, std);
  return buf;
}

MeanStd mean_std(std::span<const double> values) {
  MeanStd r;
  if (values.empty()) return r;
  const double n = static_cast<double>(values.size());
  r.mean = std::accumulate(values.begin(), values.end(), 0.0) / n;
  if (values.size() > 1) {
    double sq = 0.0;
    for (double v : values) sq += (v - r.mean) * (v - r.mean);
    r.std = std::sqrt(sq / (n - 1.0));
  }
  return r;
}

ImputationScore score_eval_entries(const Dataset& dataset, const std::vector<Tensor>& imputations) {
  if (imputations.size() != dataset.size()) {
    throw DataError("score: " + std::to_string(imputations.size()) + " imputations for " +
                    std::to_string(dataset.size()) + " samples");
  }
  std::vector<double> pred, truth, mask;
  for (std::size_t i = 0; i < dataset.size(); ++i) {
    const auto& s = dataset[i];
    if (!imputations[i].same_shape(s.values)) {
      throw DataError("score: imputation shape mismatch for sample " + std::to_string(i));
    }
    for (std::size_t k = 0; k < s.values.size(); ++k) {
      if (s.eval_masks[k] != 1.0) continue;
      pred.push_back(imputations[i][k]);
      truth.push_back(s.eval_values[k]);
      mask.push_back(1.0);
    }
  }
  if (pred.empty()) throw DataError("no eval entries");
  ImputationScore r;
  r.count = pred.size();
  r.mae = mae(pred, truth, mask);
  r.mre = mre(pred, truth, mask);
  return r;
}

}  // namespace brits
