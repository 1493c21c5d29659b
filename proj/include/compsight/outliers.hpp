#pragma once

#include <cstdint>
#include <span>
#include <utility>
#include <vector>

#include "compsight/compensation.hpp"

namespace compsight {

struct OutlierConfig {
  enum class Mode { none, iqr };
  Mode mode = Mode::iqr;
  double k = 3.0;               // fence multiplier
  std::size_t min_cohort = 8;   // smaller (t,r) cohorts are left untouched
};

struct OutlierReport {
  std::uint64_t examined = 0;
  std::uint64_t removed = 0;
};

// Log-space IQR fences within each (title, region) cohort: entries outside
// [Q1 - k*IQR, Q3 + k*IQR] are dropped. Order of survivors is preserved.
std::pair<std::vector<CompensationEntry>, OutlierReport> remove_outliers(
    std::span<const CompensationEntry> entries, const OutlierConfig& config);

}  // namespace compsight
