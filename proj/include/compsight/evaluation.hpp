#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <utility>
#include <vector>

#include "compsight/bayes_smoothing.hpp"
#include "compsight/company2vec.hpp"

namespace compsight {

struct EvalReport {
  double lower10 = 0.0;  // fraction of test entries below p10
  double ci80 = 0.0;     // fraction within [p10, p90]
  double upper10 = 0.0;  // fraction above p90
  double rmse = 0.0;     // log space
  double nll = 0.0;      // negative log likelihood, log-normal density
  double range_statistic_mean = 0.0;
  std::uint64_t cohorts_evaluated = 0;
  std::uint64_t entries_classified = 0;
  std::uint64_t entries_skipped = 0;  // no insight for the entry's cohort
};

// Split at cohort granularity: all entries of a (t,r,c) cohort land on one
// side. Throws CannotSplit for fewer than 2 cohorts.
std::pair<std::vector<CompensationEntry>, std::vector<CompensationEntry>>
split_cohorts(std::span<const CompensationEntry> entries,
              double train_fraction, std::uint64_t seed);

struct CoverageCounts {
  std::uint64_t below = 0, inside = 0, above = 0, skipped = 0;
  std::uint64_t classified() const { return below + inside + above; }
};

CoverageCounts interval_coverage(
    const std::map<CohortKey, CohortInsight>& insights,
    std::span<const CompensationEntry> test);

double rmse_log(const std::map<CohortKey, CohortInsight>& insights,
                std::span<const CompensationEntry> test);

double neg_log_likelihood(const std::map<CohortKey, CohortInsight>& insights,
                          std::span<const CompensationEntry> test);

// (p90 - p10) / mean; the mean is the log-normal mean exp(mu + sigma^2/2)
// by default, or exp(mu) when lognormal_mean is false.
double range_statistic(const CohortInsight& insight,
                       bool lognormal_mean = true);

// Spearman rank correlation with average-rank tie handling, over paired
// score vectors. Throws Undefined for mismatched sizes, < 2 items, or a
// constant vector.
double spearman(std::span<const double> a, std::span<const double> b);
// Two rankings (orderings) of the same item set.
double spearman_rankings(const std::vector<CompanyId>& a,
                         const std::vector<CompanyId>& b);

// Cosine of origin vectors; the destination vectors act as context only.
// Zero vectors compare as 0.
class CosineSimilarity {
 public:
  explicit CosineSimilarity(const EmbeddingModel& model) : model_(&model) {}
  double operator()(std::uint32_t u, std::uint32_t v) const;
  double operator()(const CompanyId& u, const CompanyId& v) const;

 private:
  const EmbeddingModel* model_;
};
CosineSimilarity cosine_baseline(const EmbeddingModel& model);

EvalReport evaluate(const std::map<CohortKey, CohortInsight>& insights,
                    std::span<const CompensationEntry> test,
                    bool lognormal_mean = true);

// Raw per-cohort percentile baseline: empirical quantiles of each cohort's
// own values. Percentiles can coincide for tiny cohorts; this is the point
// of the comparison.
std::map<CohortKey, CohortInsight> empirical_insights(
    std::span<const CompensationEntry> entries, double variance_floor = 1e-6);

struct GridPoint {
  double delta;
  double eta;
  EvalReport report;
};

struct GridSearchResult {
  std::vector<GridPoint> grid;
  std::size_t best_index = 0;
  const GridPoint& best() const { return grid[best_index]; }
};

// Cohort-granularity k-fold cross validation; metrics pooled across folds.
// Best point minimizes |ci80 - 0.8| with RMSE tie-break, then grid order.
GridSearchResult grid_search(std::span<const CompensationEntry> entries,
                             const PeerGroups& groups, const TrcModel& trc,
                             std::span<const double> delta_grid,
                             std::span<const double> eta_grid,
                             std::uint32_t k_folds, std::uint64_t seed,
                             const BayesHyperparams& base_hp,
                             const SmoothOptions& base_options);

enum class ThresholdDimension { company, peer, title, region };
const char* to_string(ThresholdDimension dim);

struct SweepPoint {
  ThresholdDimension dimension;
  std::uint64_t threshold;
  EvalReport report;
  std::uint64_t eligible_cohorts = 0;  // insights emitted at this threshold
};

// Re-runs smoothing on the train side at each threshold value and scores
// the held-out entries; the Figure-3-style curve data.
std::vector<SweepPoint> threshold_sweep(
    std::span<const CompensationEntry> train,
    std::span<const CompensationEntry> test, const TrcModel& trc,
    const PeerGroups& groups, const BayesHyperparams& hp,
    const SmoothOptions& base_options, ThresholdDimension dimension,
    std::span<const std::uint64_t> threshold_grid);

// The grids used for hyperparameter tuning: delta in {5r : r in 1..20},
// eta in {0.01 * 2^r : r in 0..11}.
std::vector<double> default_delta_grid();
std::vector<double> default_eta_grid();

}  // namespace compsight
