#include "compsight/outliers.hpp"

#include <algorithm>
#include <map>

#include "compsight/stats.hpp"

namespace compsight {

std::pair<std::vector<CompensationEntry>, OutlierReport> remove_outliers(
    std::span<const CompensationEntry> entries, const OutlierConfig& config) {
  OutlierReport report;
  report.examined = entries.size();
  if (config.mode == OutlierConfig::Mode::none) {
    return {{entries.begin(), entries.end()}, report};
  }

  std::map<std::pair<std::string, std::string>, std::vector<double>> logs;
  for (const auto& e : entries) {
    logs[{e.cohort.title, e.cohort.region}].push_back(e.log_value);
  }
  std::map<std::pair<std::string, std::string>, std::pair<double, double>>
      fences;
  for (auto& [key, values] : logs) {
    if (values.size() < config.min_cohort) continue;
    std::sort(values.begin(), values.end());
    const double q1 = sorted_quantile(values, 0.25);
    const double q3 = sorted_quantile(values, 0.75);
    const double iqr = q3 - q1;
    fences[key] = {q1 - config.k * iqr, q3 + config.k * iqr};
  }

  std::vector<CompensationEntry> kept;
  kept.reserve(entries.size());
  for (const auto& e : entries) {
    auto it = fences.find({e.cohort.title, e.cohort.region});
    if (it != fences.end() &&
        (e.log_value < it->second.first || e.log_value > it->second.second)) {
      ++report.removed;
      continue;
    }
    kept.push_back(e);
  }
  return {std::move(kept), report};
}

}  // namespace compsight
