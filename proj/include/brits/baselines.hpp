#pragma once

#include <string>
#include <vector>

#include "brits/data.hpp"

namespace brits {

enum class BaselineKind { mean, locf };

BaselineKind parse_baseline(const std::string& name);
const char* baseline_name(BaselineKind kind);

/// Non-learned imputations, one T x D matrix per sample. Observed entries are
/// returned unchanged.
///
/// mean: missing entries take the feature's mean over every observed entry of
///       the dataset.
/// locf: missing entries take the last observed value of the same feature in
///       the same sample, or the feature mean before the first observation.
std::vector<Tensor> baseline_impute(const Dataset& dataset, BaselineKind kind);

}  // namespace brits
