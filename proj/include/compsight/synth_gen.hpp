#pragma once

#include <cstdint>
#include <iosfwd>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "compsight/compensation.hpp"
#include "compsight/transitions.hpp"

namespace compsight {

struct SynthConfig {
  std::uint32_t n_clusters = 2;
  std::uint32_t companies_per_cluster = 50;
  // expected transitions per ordered company pair
  double intra_transition_rate = 5.0;
  double inter_transition_rate = 0.5;
  std::uint32_t n_titles = 10;
  std::uint32_t n_regions = 5;
  // planted (title, region) means drawn uniformly from this log-space range
  double trc_mean_low = 10.8;   // ~exp(10.8) = 49k
  double trc_mean_high = 12.2;  // ~exp(12.2) = 199k
  double company_offset_sd = 0.15;
  // shared per-cluster offset component; 0 keeps offsets independent across
  // companies, > 0 makes peer groups informative about compensation
  double cluster_offset_sd = 0.0;
  double noise_sd = 0.25;  // within-cohort log-space noise
  enum class EntriesDist { poisson, fixed };
  EntriesDist entries_dist = EntriesDist::poisson;
  double entries_lambda = 3.0;   // poisson mode
  std::uint32_t entries_fixed = 3;  // fixed mode
  std::uint64_t seed = 1;

  void validate() const;
};

struct GroundTruth {
  std::map<CompanyId, std::uint32_t> cluster_of;
  std::map<std::pair<std::string, std::string>, double> true_trc_mean;
  std::map<CompanyId, double> true_company_offset;
  double true_noise_sd = 0.0;

  // log-space mean of cohort values: trc mean + company offset
  double true_log_mean(const CohortKey& key) const;
};

struct SynthData {
  TransitionDataset transitions;
  std::vector<CompensationEntry> entries;
  GroundTruth truth;
};

SynthData generate(const SynthConfig& config);

struct Holdout {
  std::vector<CompensationEntry> visible;
  // hidden cohort -> (true log mean, true log sd)
  std::map<CohortKey, std::pair<double, double>> hidden;
  std::vector<CompensationEntry> hidden_entries;
};

// Removes every entry of a random fraction of (t,r,c) cohorts; the hidden
// cohorts' true distributions are returned for scoring inferred insights.
Holdout holdout_empty_cohorts(const std::vector<CompensationEntry>& entries,
                              const GroundTruth& truth, double fraction,
                              std::uint64_t seed);

void write_ground_truth_json(const GroundTruth& truth, std::ostream& out);
GroundTruth read_ground_truth_json(std::istream& in);

}  // namespace compsight
