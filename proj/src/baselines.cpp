#include "brits/baselines.hpp"

namespace brits {

BaselineKind parse_baseline(const std::string& name) {
  if (name == "mean") return BaselineKind::mean;
  if (name == "locf") return BaselineKind::locf;
  throw DataError("unknown baseline '" + name + "' (expected mean or locf)");
}

const char* baseline_name(BaselineKind kind) {
  return kind == BaselineKind::mean ? "mean" : "locf";
}

std::vector<Tensor> baseline_impute(const Dataset& dataset, BaselineKind kind) {
  validate(dataset);
  const std::vector<double> feature_mean = compute_normalization(dataset).mean;

  std::vector<Tensor> out;
  out.reserve(dataset.size());
  for (const auto& s : dataset) {
    Tensor imputed = s.values;
    for (std::size_t d = 0; d < s.features(); ++d) {
      double carried = feature_mean[d];
      for (std::size_t t = 0; t < s.length(); ++t) {
        if (s.masks(t, d) == 1.0) {
          carried = s.values(t, d);
        } else {
          imputed(t, d) = kind == BaselineKind::mean ? feature_mean[d] : carried;
        }
      }
    }
    out.push_back(std::move(imputed));
  }
  return out;
}

}  // namespace brits
