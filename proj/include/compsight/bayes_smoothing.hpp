#pragma once

#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "compsight/peer_groups.hpp"
#include "compsight/trc_baseline.hpp"

namespace compsight {

struct BayesHyperparams {
  double delta = 5.0;      // prior pseudo-count divisor: n0 = m_prior / delta
  double eta = 0.01;       // inverse-Gamma smoothing weight
  std::uint64_t peer_prior_threshold = 50;  // n_tau
  double variance_floor = 1e-6;             // log-space
  // When true, the recoupled variance uses the t predictive variance
  // scale_sq * df/(df-2) instead of scale_sq itself.
  bool predictive_variance_inflation = false;

  void validate() const;
};

enum class PriorSource { peer, global };

struct Prior {
  double mu0 = 0.0;
  double sigma0_sq = 0.0;       // >= variance_floor
  std::uint64_t m_prior = 0;    // residual count behind the prior, >= 1
  PriorSource source = PriorSource::global;
};

// Pooled company adjustments, keyed by company; the vector length is n_c.
using ResidualsByCompany = std::map<CompanyId, std::vector<double>>;

// Drops residuals with no company attached.
ResidualsByCompany pool_residuals(std::span<const Residual> residuals);

std::map<CompanyId, std::uint64_t> residual_counts(
    const ResidualsByCompany& residuals);

enum class PeerPriorStatus { ok, insufficient_peers, degenerate_variance };
struct PeerPriorResult {
  PeerPriorStatus status = PeerPriorStatus::insufficient_peers;
  std::optional<Prior> prior;
  std::uint64_t peer_support = 0;  // n_pc(c)
};

// Pooled mean/variance over the residuals of c's peers. Not a failure when
// n_pc(c) < n_tau or the pooled variance is degenerate; both trigger the
// global fallback.
PeerPriorResult peer_prior(const CompanyId& c, const PeerGroups& groups,
                           const ResidualsByCompany& residuals,
                           const BayesHyperparams& hp);

// Mean/variance over all residuals (population divisor), variance clamped
// to the floor. Throws EmptyDataset when no residuals exist.
Prior global_prior(const ResidualsByCompany& residuals,
                   const BayesHyperparams& hp);

// Peer prior when usable, otherwise the supplied global prior.
Prior select_prior(const CompanyId& c, const PeerGroups& groups,
                   const ResidualsByCompany& residuals, const Prior& global,
                   const BayesHyperparams& hp);

// Conjugate normal-inverse-Gamma posterior for one company's adjustment.
struct CompanyPosterior {
  CompanyId company;
  double df = 0.0;        // n_c + 2*eta/sigma0^2
  double location = 0.0;  // posterior/predictive center
  double scale_sq = 0.0;  // squared scale of the location-scale t
  double n0 = 0.0;        // m_prior / delta
  double gamma_shape = 0.0;  // posterior Gamma shape of the precision
  double gamma_rate = 0.0;   // posterior Gamma rate
  std::uint64_t n_obs = 0;   // n_c
  Prior prior_used;
};

// n_c = 0 is valid and reduces exactly to the prior predictive.
CompanyPosterior posterior(const CompanyId& c,
                           std::span<const double> residuals,
                           const Prior& prior, const BayesHyperparams& hp);

// Quantiles of the t predictive: location + sqrt(scale_sq) * T^-1_df(p).
std::vector<double> predictive_interval(const CompanyPosterior& post,
                                        std::span<const double> levels);

// Recouples the company component with the (title, region) estimate.
// Returns (log_mean, log_variance).
std::pair<double, double> recouple(const CompanyPosterior& post,
                                   const TrcEstimate& trc,
                                   const BayesHyperparams& hp);

enum class Provenance { empirical, smoothed, inferred_no_data };
const char* to_string(Provenance p);

struct CohortInsight {
  CohortKey cohort;
  double log_mean = 0.0;
  double log_variance = 0.0;  // > 0
  double p10 = 0.0, p50 = 0.0, p90 = 0.0;
  Provenance provenance = Provenance::smoothed;
  std::uint64_t support = 0;  // direct submissions to this cohort
};

// Displayed percentiles from the log-normal implied by (log_mean,
// log_variance): exp(log_mean + z * sqrt(log_variance)) at z = -kZ90, 0,
// +kZ90.
CohortInsight make_insight(const CohortKey& cohort, double log_mean,
                           double log_variance, std::uint64_t support,
                           Provenance provenance);

struct SmoothingThresholds {
  std::uint64_t company = 25;
  std::uint64_t peer = 50;  // n_tau
  std::uint64_t title = 25;
  std::uint64_t region = 40;
};

struct SmoothOptions {
  SmoothingThresholds thresholds;
  std::uint64_t member_floor = 2;
  // Cohort -> mapped member count. Filtering applies only when set; a
  // missing cohort then counts as 0 members.
  const std::map<CohortKey, std::uint64_t>* member_counts = nullptr;
  // Insights for these cohorts are forced (thresholds bypassed) as long as
  // a (title, region) estimate exists; used by the evaluation harness.
  std::vector<CohortKey> requested_cohorts;
  // Enumerate empty cohorts over eligible (title, region) x companies.
  bool enumerate_cross_product = true;
  std::uint32_t threads = 1;
};

struct SkippedCohort {
  CohortKey cohort;
  std::string reason;
};

struct SmoothResult {
  std::map<CohortKey, CohortInsight> insights;
  std::vector<SkippedCohort> skipped;
  std::uint64_t cohorts_with_data = 0;
  std::uint64_t cohorts_inferred_only = 0;
};

// Full update procedure: residualize, build priors, one posterior per
// company, then recouple per cohort. Observed (t,r,c) cohorts are always
// smoothed; empty cohorts come from the eligible cross-product and from
// requested_cohorts. Output is deterministic (sorted by cohort key)
// regardless of thread count.
SmoothResult smooth_all(std::span<const CompensationEntry> entries,
                        const TrcModel& trc, const PeerGroups& groups,
                        const BayesHyperparams& hp,
                        const SmoothOptions& options);

// Sorted-by-key JSONL, currency rounded to 2 decimals at this boundary.
void write_insights_jsonl(const std::map<CohortKey, CohortInsight>& insights,
                          std::ostream& out);
std::string insight_line(const CohortInsight& insight);
CohortInsight parse_insight_line(const std::string& line);

}  // namespace compsight
