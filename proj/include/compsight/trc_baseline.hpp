#pragma once

#include <cstdint>
#include <iosfwd>
#include <map>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "compsight/compensation.hpp"

namespace compsight {

enum class TrcLevel { title_region, title, global };
const char* to_string(TrcLevel level);

// Log-space mean estimate for one (title, region), with the variance of the
// estimate itself and the provenance level that produced it.
struct TrcEstimate {
  std::string title;
  std::string region;
  double mean = 0.0;
  double mean_variance = 0.0;  // Var of the mean estimate, not data variance
  std::uint64_t support = 0;   // entries behind the estimate at `level`
  TrcLevel level = TrcLevel::global;
};

class TrcModel {
 public:
  const TrcEstimate& at(const std::string& title,
                        const std::string& region) const;  // NotFound
  bool contains(const std::string& title, const std::string& region) const;
  const std::map<std::pair<std::string, std::string>, TrcEstimate>& estimates()
      const {
    return estimates_;
  }
  void insert(TrcEstimate est);

 private:
  std::map<std::pair<std::string, std::string>, TrcEstimate> estimates_;
};

// (title, region) mean model. The referenced production regression is
// external; this estimator is hierarchical empirical means with
// threshold-gated fallback, kept behind an interface so a regression can be
// swapped in.
class TrcEstimator {
 public:
  virtual ~TrcEstimator() = default;
  virtual TrcModel fit(std::span<const CompensationEntry> entries) const = 0;
};

class HierarchicalMeanEstimator final : public TrcEstimator {
 public:
  HierarchicalMeanEstimator(std::uint64_t min_title_support = 25,
                            std::uint64_t min_region_support = 40);
  TrcModel fit(std::span<const CompensationEntry> entries) const override;

 private:
  std::uint64_t min_title_support_;
  std::uint64_t min_region_support_;
};

// Convenience wrapper over HierarchicalMeanEstimator.
TrcModel fit_trc(std::span<const CompensationEntry> entries,
                 std::uint64_t min_title_support = 25,
                 std::uint64_t min_region_support = 40);

// One company adjustment: log value minus the (title, region) estimate.
struct Residual {
  CompanyId company;  // may be empty when the entry had no company
  double value = 0.0;
  CohortKey source;
};

std::vector<Residual> residualize(std::span<const CompensationEntry> entries,
                                  const TrcModel& trc);

void write_trc_jsonl(const TrcModel& model, std::ostream& out);
TrcModel read_trc_jsonl(std::istream& in);

}  // namespace compsight
