#include "compsight/bayes_smoothing.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <ostream>
#include <set>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "compsight/stats.hpp"

#include "json.hpp"

namespace compsight {

void BayesHyperparams::validate() const {
  if (!(delta > 0.0)) throw ConfigError("delta must be > 0");
  if (!(eta > 0.0)) throw ConfigError("eta must be > 0");
  if (!(variance_floor > 0.0)) throw ConfigError("variance_floor must be > 0");
}

ResidualsByCompany pool_residuals(std::span<const Residual> residuals) {
  ResidualsByCompany by_company;
  for (const auto& r : residuals) {
    if (r.company.empty()) continue;
    by_company[r.company].push_back(r.value);
  }
  return by_company;
}

std::map<CompanyId, std::uint64_t> residual_counts(
    const ResidualsByCompany& residuals) {
  std::map<CompanyId, std::uint64_t> counts;
  for (const auto& [c, v] : residuals) counts[c] = v.size();
  return counts;
}

PeerPriorResult peer_prior(const CompanyId& c, const PeerGroups& groups,
                           const ResidualsByCompany& residuals,
                           const BayesHyperparams& hp) {
  hp.validate();
  PeerPriorResult result;
  auto git = groups.find(c);
  if (git == groups.end()) return result;

  double sum = 0.0;
  std::uint64_t n = 0;
  for (const auto& p : git->second.peers) {
    auto rit = residuals.find(p.id);
    if (rit == residuals.end()) continue;
    for (double y : rit->second) sum += y;
    n += rit->second.size();
  }
  result.peer_support = n;
  if (n < hp.peer_prior_threshold || n == 0) {
    result.status = PeerPriorStatus::insufficient_peers;
    return result;
  }
  const double mean = sum / static_cast<double>(n);
  double ss = 0.0;
  for (const auto& p : git->second.peers) {
    auto rit = residuals.find(p.id);
    if (rit == residuals.end()) continue;
    for (double y : rit->second) {
      const double d = y - mean;
      ss += d * d;
    }
  }
  const double var = ss / static_cast<double>(n);
  if (var < hp.variance_floor) {
    result.status = PeerPriorStatus::degenerate_variance;
    return result;
  }
  result.status = PeerPriorStatus::ok;
  result.prior = Prior{mean, var, n, PriorSource::peer};
  return result;
}

Prior global_prior(const ResidualsByCompany& residuals,
                   const BayesHyperparams& hp) {
  hp.validate();
  double sum = 0.0;
  std::uint64_t n = 0;
  for (const auto& [c, values] : residuals) {
    for (double y : values) sum += y;
    n += values.size();
  }
  if (n == 0) throw EmptyDatasetError("global_prior: no residuals");
  const double mean = sum / static_cast<double>(n);
  double ss = 0.0;
  for (const auto& [c, values] : residuals) {
    for (double y : values) {
      const double d = y - mean;
      ss += d * d;
    }
  }
  const double var =
      std::max(ss / static_cast<double>(n), hp.variance_floor);
  return Prior{mean, var, n, PriorSource::global};
}

Prior select_prior(const CompanyId& c, const PeerGroups& groups,
                   const ResidualsByCompany& residuals, const Prior& global,
                   const BayesHyperparams& hp) {
  auto result = peer_prior(c, groups, residuals, hp);
  if (result.status == PeerPriorStatus::ok) return *result.prior;
  return global;
}

CompanyPosterior posterior(const CompanyId& c,
                           std::span<const double> residuals,
                           const Prior& prior, const BayesHyperparams& hp) {
  hp.validate();
  if (prior.m_prior < 1) throw ConfigError("prior.m_prior must be >= 1");
  if (!(prior.sigma0_sq > 0.0)) throw ConfigError("prior.sigma0_sq must be > 0");

  CompanyPosterior post;
  post.company = c;
  post.prior_used = prior;
  post.n_obs = residuals.size();
  post.n0 = static_cast<double>(prior.m_prior) / hp.delta;

  const double n_c = static_cast<double>(residuals.size());
  const double alpha0 = hp.eta / prior.sigma0_sq;
  post.df = n_c + 2.0 * alpha0;
  post.gamma_shape = n_c / 2.0 + alpha0;

  if (residuals.empty()) {
    // prior predictive, written in closed form so the reduction is exact
    post.location = prior.mu0;
    post.scale_sq = (1.0 + 1.0 / post.n0) * prior.sigma0_sq;
    post.gamma_rate = hp.eta;
    return post;
  }

  double sum = 0.0;
  for (double y : residuals) sum += y;
  const double ybar = sum / n_c;
  double ss = 0.0;
  for (double y : residuals) {
    const double d = y - ybar;
    ss += d * d;
  }
  const double kappa = n_c + post.n0;
  const double dev = ybar - prior.mu0;
  post.location = (n_c * ybar + post.n0 * prior.mu0) / kappa;
  post.gamma_rate =
      hp.eta + 0.5 * ss + (n_c * post.n0 / (2.0 * kappa)) * dev * dev;
  post.scale_sq = (1.0 + 1.0 / kappa) * post.gamma_rate / post.gamma_shape;
  return post;
}

std::vector<double> predictive_interval(const CompanyPosterior& post,
                                        std::span<const double> levels) {
  std::vector<double> out;
  out.reserve(levels.size());
  const double scale = std::sqrt(post.scale_sq);
  for (double p : levels) {
    if (!(p > 0.0 && p < 1.0)) {
      throw ConfigError("predictive levels must lie in (0,1)");
    }
    if (p == 0.5) {
      out.push_back(post.location);
      continue;
    }
    out.push_back(post.location + scale * student_t_quantile(post.df, p));
  }
  return out;
}

std::pair<double, double> recouple(const CompanyPosterior& post,
                                   const TrcEstimate& trc,
                                   const BayesHyperparams& hp) {
  double company_var = post.scale_sq;
  if (hp.predictive_variance_inflation && post.df > 2.0) {
    company_var *= post.df / (post.df - 2.0);
  }
  return {post.location + trc.mean, company_var + trc.mean_variance};
}

const char* to_string(Provenance p) {
  switch (p) {
    case Provenance::empirical: return "empirical";
    case Provenance::smoothed: return "smoothed";
    case Provenance::inferred_no_data: return "inferred_no_data";
  }
  return "?";
}

CohortInsight make_insight(const CohortKey& cohort, double log_mean,
                           double log_variance, std::uint64_t support,
                           Provenance provenance) {
  if (!(log_variance > 0.0)) {
    throw ConfigError("insight requires log_variance > 0");
  }
  CohortInsight ins;
  ins.cohort = cohort;
  ins.log_mean = log_mean;
  ins.log_variance = log_variance;
  const double sd = std::sqrt(log_variance);
  ins.p10 = std::exp(log_mean - kZ90 * sd);
  ins.p50 = std::exp(log_mean);
  ins.p90 = std::exp(log_mean + kZ90 * sd);
  ins.provenance = provenance;
  ins.support = support;
  return ins;
}

namespace {

struct CohortPlan {
  CohortKey key;
  std::uint64_t support = 0;
  bool forced = false;  // requested explicitly, thresholds bypassed
};

}  // namespace

SmoothResult smooth_all(std::span<const CompensationEntry> entries,
                        const TrcModel& trc, const PeerGroups& groups,
                        const BayesHyperparams& hp,
                        const SmoothOptions& options) {
  hp.validate();
  SmoothResult result;

  // step 2: decouple into company adjustments
  const auto residuals = residualize(entries, trc);
  const auto by_company = pool_residuals(residuals);

  // n_tau comes from the threshold set so the two knobs cannot drift apart
  BayesHyperparams hp_used = hp;
  hp_used.peer_prior_threshold = options.thresholds.peer;

  const Prior global = global_prior(by_company, hp_used);

  // marginal supports
  std::map<std::string, std::uint64_t> title_support;
  std::map<std::string, std::uint64_t> region_support;
  std::map<CompanyId, std::uint64_t> company_support;
  std::map<CohortKey, std::uint64_t> cohort_support;
  std::set<std::pair<std::string, std::string>> observed_tr;
  for (const auto& e : entries) {
    ++title_support[e.cohort.title];
    ++region_support[e.cohort.region];
    observed_tr.insert({e.cohort.title, e.cohort.region});
    if (e.cohort.has_company()) {
      ++company_support[e.cohort.company];
      ++cohort_support[e.cohort];
    }
  }

  // step 3: one posterior per company with data
  std::map<CompanyId, CompanyPosterior> posteriors;
  for (const auto& [c, n] : company_support) {
    const Prior prior = select_prior(c, groups, by_company, global, hp_used);
    auto rit = by_company.find(c);
    const std::span<const double> res =
        rit == by_company.end() ? std::span<const double>{}
                                : std::span<const double>(rit->second);
    posteriors.emplace(c, posterior(c, res, prior, hp_used));
  }

  const auto member_count_of = [&](const CohortKey& key) -> std::uint64_t {
    if (options.member_counts == nullptr) return UINT64_MAX;  // filter off
    auto it = options.member_counts->find(key);
    return it == options.member_counts->end() ? 0 : it->second;
  };

  // enumerate the emission plan
  std::map<CohortKey, CohortPlan> plan;
  for (const auto& [key, n] : cohort_support) {
    plan[key] = CohortPlan{key, n, false};
  }
  if (options.enumerate_cross_product) {
    // full observed-(t,r) x company cross product; the screening pass below
    // assigns a reason code to every excluded combination
    for (const auto& [t, r] : observed_tr) {
      for (const auto& [c, n] : company_support) {
        CohortKey key{t, r, c};
        if (plan.find(key) == plan.end()) {
          plan[key] = CohortPlan{key, 0, false};
        }
      }
    }
  }
  for (const auto& key : options.requested_cohorts) {
    auto it = plan.find(key);
    if (it == plan.end()) {
      auto sit = cohort_support.find(key);
      plan[key] = CohortPlan{key, sit == cohort_support.end() ? 0 : sit->second,
                             true};
    } else {
      it->second.forced = true;
    }
  }

  // screen the plan, then compute insights in parallel over a stable order
  std::vector<CohortPlan> jobs;
  jobs.reserve(plan.size());
  for (auto& [key, p] : plan) {
    const bool observed = p.support > 0;
    if (!trc.contains(key.title, key.region)) {
      result.skipped.push_back({key, "no_trc_estimate"});
      continue;
    }
    if (!observed && !p.forced) {
      if (title_support[key.title] < options.thresholds.title) {
        result.skipped.push_back({key, "title_support"});
        continue;
      }
      if (region_support[key.region] < options.thresholds.region) {
        result.skipped.push_back({key, "region_support"});
        continue;
      }
      if (company_support[key.company] < options.thresholds.company) {
        result.skipped.push_back({key, "company_support"});
        continue;
      }
    }
    if (!p.forced && member_count_of(key) < options.member_floor) {
      result.skipped.push_back({key, "member_floor"});
      continue;
    }
    jobs.push_back(p);
  }

  std::vector<CohortInsight> computed(jobs.size());
  const auto compute_one = [&](std::size_t i) {
    const auto& job = jobs[i];
    const auto& est = trc.at(job.key.title, job.key.region);
    auto pit = posteriors.find(job.key.company);
    const CompanyPosterior* post;
    CompanyPosterior scratch;
    if (pit != posteriors.end()) {
      post = &pit->second;
    } else {
      // company never seen in the data: pure prior predictive
      scratch = posterior(job.key.company, {},
                          select_prior(job.key.company, groups, by_company,
                                       global, hp_used),
                          hp_used);
      post = &scratch;
    }
    const auto [log_mean, log_var] = recouple(*post, est, hp_used);
    computed[i] = make_insight(
        job.key, log_mean, std::max(log_var, hp_used.variance_floor),
        job.support,
        job.support > 0 ? Provenance::smoothed : Provenance::inferred_no_data);
  };

  if (options.threads <= 1) {
    for (std::size_t i = 0; i < jobs.size(); ++i) compute_one(i);
  } else {
#ifdef _OPENMP
    omp_set_num_threads(static_cast<int>(options.threads));
    const std::int64_t n = static_cast<std::int64_t>(jobs.size());
    std::exception_ptr err;
#pragma omp parallel for schedule(dynamic, 64)
    for (std::int64_t i = 0; i < n; ++i) {
      try {
        compute_one(static_cast<std::size_t>(i));
      } catch (...) {
#pragma omp critical
        if (!err) err = std::current_exception();
      }
    }
    if (err) std::rethrow_exception(err);
#else
    for (std::size_t i = 0; i < jobs.size(); ++i) compute_one(i);
#endif
  }

  for (auto& ins : computed) {
    if (ins.support > 0) ++result.cohorts_with_data;
    else ++result.cohorts_inferred_only;
    result.insights.emplace(ins.cohort, std::move(ins));
  }
  return result;
}

std::string insight_line(const CohortInsight& ins) {
  char nums[256];
  std::snprintf(nums, sizeof nums,
                "\"p10\":%.2f,\"p50\":%.2f,\"p90\":%.2f,"
                "\"log_mean\":%.17g,\"log_variance\":%.17g",
                ins.p10, ins.p50, ins.p90, ins.log_mean, ins.log_variance);
  std::string line = "{\"title\":" + nlohmann::json(ins.cohort.title).dump() +
                     ",\"region\":" + nlohmann::json(ins.cohort.region).dump() +
                     ",\"company\":" + nlohmann::json(ins.cohort.company).dump() +
                     "," + nums + ",\"support\":" +
                     std::to_string(ins.support) + ",\"provenance\":\"" +
                     to_string(ins.provenance) + "\"}";
  return line;
}

void write_insights_jsonl(const std::map<CohortKey, CohortInsight>& insights,
                          std::ostream& out) {
  for (const auto& [key, ins] : insights) {
    out << insight_line(ins) << '\n';
  }
}

CohortInsight parse_insight_line(const std::string& line) {
  nlohmann::json j = nlohmann::json::parse(line);
  CohortInsight ins;
  ins.cohort.title = j.at("title").get<std::string>();
  ins.cohort.region = j.at("region").get<std::string>();
  ins.cohort.company = j.at("company").get<std::string>();
  ins.p10 = j.at("p10").get<double>();
  ins.p50 = j.at("p50").get<double>();
  ins.p90 = j.at("p90").get<double>();
  ins.log_mean = j.at("log_mean").get<double>();
  ins.log_variance = j.at("log_variance").get<double>();
  ins.support = j.at("support").get<std::uint64_t>();
  const auto prov = j.at("provenance").get<std::string>();
  ins.provenance = prov == "empirical" ? Provenance::empirical
                   : prov == "smoothed"
                       ? Provenance::smoothed
                       : Provenance::inferred_no_data;
  return ins;
}

}  // namespace compsight
