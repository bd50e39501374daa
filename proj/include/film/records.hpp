#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "film/metrics.hpp"

namespace film {

// One evaluated cell of the experiment grid: a dataset variant (by proportion)
// crossed with a technique (IAA + learner) and a CV fold.
struct RunRecord {
  std::size_t variant = 0;  // 0 is the original dataset
  double p_target = 0.0;    // the variant's designed minority proportion
  std::string technique;    // "<iaa>_<learner>"
  std::size_t fold = 0;
  MetricVector metrics;
};

}  // namespace film
