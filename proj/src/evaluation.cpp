#include "compsight/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "compsight/stats.hpp"

namespace compsight {

std::pair<std::vector<CompensationEntry>, std::vector<CompensationEntry>>
split_cohorts(std::span<const CompensationEntry> entries,
              double train_fraction, std::uint64_t seed) {
  if (!(train_fraction > 0.0 && train_fraction < 1.0)) {
    throw ConfigError("train_fraction must lie in (0,1)");
  }
  std::set<CohortKey> keys;
  for (const auto& e : entries) keys.insert(e.cohort);
  if (keys.size() < 2) {
    throw CannotSplitError("need at least 2 cohorts to split");
  }
  std::vector<CohortKey> ordered(keys.begin(), keys.end());
  Rng rng(seed);
  rng.shuffle(ordered);
  auto n_train = static_cast<std::size_t>(std::llround(
      train_fraction * static_cast<double>(ordered.size())));
  n_train = std::clamp<std::size_t>(n_train, 1, ordered.size() - 1);
  const std::set<CohortKey> train_keys(
      ordered.begin(), ordered.begin() + static_cast<std::ptrdiff_t>(n_train));

  std::pair<std::vector<CompensationEntry>, std::vector<CompensationEntry>> out;
  for (const auto& e : entries) {
    if (train_keys.count(e.cohort)) out.first.push_back(e);
    else out.second.push_back(e);
  }
  return out;
}

CoverageCounts interval_coverage(
    const std::map<CohortKey, CohortInsight>& insights,
    std::span<const CompensationEntry> test) {
  CoverageCounts counts;
  for (const auto& e : test) {
    auto it = insights.find(e.cohort);
    if (it == insights.end()) {
      ++counts.skipped;
      continue;
    }
    const auto& ins = it->second;
    if (e.value < ins.p10) ++counts.below;
    else if (e.value > ins.p90) ++counts.above;
    else ++counts.inside;
  }
  return counts;
}

double rmse_log(const std::map<CohortKey, CohortInsight>& insights,
                std::span<const CompensationEntry> test) {
  double se = 0.0;
  std::uint64_t n = 0;
  for (const auto& e : test) {
    auto it = insights.find(e.cohort);
    if (it == insights.end()) continue;
    const double d = e.log_value - it->second.log_mean;
    se += d * d;
    ++n;
  }
  return n == 0 ? 0.0 : std::sqrt(se / static_cast<double>(n));
}

namespace {

inline double lognormal_nll_term(double log_value, double mu, double var) {
  // -log of the log-normal density at exp(log_value)
  const double d = log_value - mu;
  return log_value + 0.5 * std::log(2.0 * M_PI * var) + d * d / (2.0 * var);
}

}  // namespace

double neg_log_likelihood(const std::map<CohortKey, CohortInsight>& insights,
                          std::span<const CompensationEntry> test) {
  double nll = 0.0;
  for (const auto& e : test) {
    auto it = insights.find(e.cohort);
    if (it == insights.end()) continue;
    nll += lognormal_nll_term(e.log_value, it->second.log_mean,
                              it->second.log_variance);
  }
  return nll;
}

double range_statistic(const CohortInsight& insight, bool lognormal_mean) {
  const double mean = lognormal_mean
                          ? std::exp(insight.log_mean +
                                     insight.log_variance / 2.0)
                          : std::exp(insight.log_mean);
  return (insight.p90 - insight.p10) / mean;
}

namespace {

std::vector<double> average_ranks(std::span<const double> xs) {
  const std::size_t n = xs.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return xs[a] < xs[b]; });
  std::vector<double> ranks(n);
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i;
    while (j + 1 < n && xs[order[j + 1]] == xs[order[i]]) ++j;
    const double avg = (static_cast<double>(i) + static_cast<double>(j)) / 2.0 +
                       1.0;
    for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = avg;
    i = j + 1;
  }
  return ranks;
}

double pearson(std::span<const double> a, std::span<const double> b) {
  const auto n = static_cast<double>(a.size());
  double ma = 0.0, mb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    ma += a[i];
    mb += b[i];
  }
  ma /= n;
  mb /= n;
  double cov = 0.0, va = 0.0, vb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double da = a[i] - ma;
    const double db = b[i] - mb;
    cov += da * db;
    va += da * da;
    vb += db * db;
  }
  if (va == 0.0 || vb == 0.0) {
    throw UndefinedError("rank correlation undefined for constant input");
  }
  return cov / std::sqrt(va * vb);
}

}  // namespace

double spearman(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) {
    throw UndefinedError("spearman requires paired score vectors");
  }
  if (a.size() < 2) {
    throw UndefinedError("spearman requires at least 2 items");
  }
  const auto ra = average_ranks(a);
  const auto rb = average_ranks(b);
  return pearson(ra, rb);
}

double spearman_rankings(const std::vector<CompanyId>& a,
                         const std::vector<CompanyId>& b) {
  if (a.size() != b.size()) {
    throw UndefinedError("rankings cover different item counts");
  }
  std::map<CompanyId, double> pos_a;
  for (std::size_t i = 0; i < a.size(); ++i) {
    pos_a[a[i]] = static_cast<double>(i);
  }
  std::vector<double> ra, rb;
  ra.reserve(a.size());
  rb.reserve(a.size());
  for (std::size_t i = 0; i < b.size(); ++i) {
    auto it = pos_a.find(b[i]);
    if (it == pos_a.end()) {
      throw UndefinedError("rankings cover different item sets");
    }
    ra.push_back(it->second);
    rb.push_back(static_cast<double>(i));
  }
  return spearman(ra, rb);
}

double CosineSimilarity::operator()(std::uint32_t u, std::uint32_t v) const {
  const auto a = model_->phi(u);
  const auto b = model_->phi(v);
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t d = 0; d < a.size(); ++d) {
    dot += a[d] * b[d];
    na += a[d] * a[d];
    nb += b[d] * b[d];
  }
  if (na == 0.0 || nb == 0.0) return 0.0;
  return dot / std::sqrt(na * nb);
}

double CosineSimilarity::operator()(const CompanyId& u,
                                    const CompanyId& v) const {
  return (*this)(model_->index_of(u), model_->index_of(v));
}

CosineSimilarity cosine_baseline(const EmbeddingModel& model) {
  return CosineSimilarity(model);
}

namespace {

struct EvalAccumulator {
  CoverageCounts cov;
  double se_sum = 0.0;
  double nll_sum = 0.0;
  double range_sum = 0.0;
  std::uint64_t range_n = 0;
  std::set<CohortKey> cohorts;

  void add(const std::map<CohortKey, CohortInsight>& insights,
           std::span<const CompensationEntry> test, bool lognormal_mean) {
    for (const auto& e : test) {
      auto it = insights.find(e.cohort);
      if (it == insights.end()) {
        ++cov.skipped;
        continue;
      }
      const auto& ins = it->second;
      if (e.value < ins.p10) ++cov.below;
      else if (e.value > ins.p90) ++cov.above;
      else ++cov.inside;
      const double d = e.log_value - ins.log_mean;
      se_sum += d * d;
      nll_sum += lognormal_nll_term(e.log_value, ins.log_mean,
                                    ins.log_variance);
      if (cohorts.insert(e.cohort).second) {
        range_sum += range_statistic(ins, lognormal_mean);
        ++range_n;
      }
    }
  }

  EvalReport finalize() const {
    EvalReport r;
    const auto n = cov.classified();
    if (n > 0) {
      r.lower10 = static_cast<double>(cov.below) / static_cast<double>(n);
      r.ci80 = static_cast<double>(cov.inside) / static_cast<double>(n);
      r.upper10 = static_cast<double>(cov.above) / static_cast<double>(n);
      r.rmse = std::sqrt(se_sum / static_cast<double>(n));
      r.nll = nll_sum;
    }
    r.range_statistic_mean =
        range_n == 0 ? 0.0 : range_sum / static_cast<double>(range_n);
    r.cohorts_evaluated = cohorts.size();
    r.entries_classified = n;
    r.entries_skipped = cov.skipped;
    return r;
  }
};

}  // namespace

EvalReport evaluate(const std::map<CohortKey, CohortInsight>& insights,
                    std::span<const CompensationEntry> test,
                    bool lognormal_mean) {
  EvalAccumulator acc;
  acc.add(insights, test, lognormal_mean);
  return acc.finalize();
}

std::map<CohortKey, CohortInsight> empirical_insights(
    std::span<const CompensationEntry> entries, double variance_floor) {
  std::map<CohortKey, std::vector<double>> values;
  for (const auto& e : entries) values[e.cohort].push_back(e.value);

  std::map<CohortKey, CohortInsight> out;
  for (auto& [key, vals] : values) {
    std::sort(vals.begin(), vals.end());
    std::vector<double> logs;
    logs.reserve(vals.size());
    for (double v : vals) logs.push_back(std::log(v));
    const MeanVar mv = mean_var(logs);
    CohortInsight ins;
    ins.cohort = key;
    ins.p10 = sorted_quantile(vals, 0.1);
    ins.p50 = sorted_quantile(vals, 0.5);
    ins.p90 = sorted_quantile(vals, 0.9);
    ins.log_mean = mv.mean;
    ins.log_variance = std::max(mv.var, variance_floor);
    ins.provenance = Provenance::empirical;
    ins.support = vals.size();
    out.emplace(key, std::move(ins));
  }
  return out;
}

std::vector<double> default_delta_grid() {
  std::vector<double> g;
  for (int r = 1; r <= 20; ++r) g.push_back(5.0 * r);
  return g;
}

std::vector<double> default_eta_grid() {
  std::vector<double> g;
  for (int r = 0; r <= 11; ++r) g.push_back(0.01 * std::pow(2.0, r));
  return g;
}

GridSearchResult grid_search(std::span<const CompensationEntry> entries,
                             const PeerGroups& groups, const TrcModel& trc,
                             std::span<const double> delta_grid,
                             std::span<const double> eta_grid,
                             std::uint32_t k_folds, std::uint64_t seed,
                             const BayesHyperparams& base_hp,
                             const SmoothOptions& base_options) {
  if (delta_grid.empty() || eta_grid.empty()) {
    throw ConfigError("hyperparameter grids must be non-empty");
  }
  if (k_folds < 2) throw ConfigError("k_folds must be >= 2");

  std::set<CohortKey> keyset;
  for (const auto& e : entries) keyset.insert(e.cohort);
  if (keyset.size() < k_folds) {
    throw CannotSplitError("fewer cohorts than folds");
  }
  std::vector<CohortKey> keys(keyset.begin(), keyset.end());
  Rng rng(seed);
  rng.shuffle(keys);
  std::map<CohortKey, std::uint32_t> fold_of;
  for (std::size_t i = 0; i < keys.size(); ++i) {
    fold_of[keys[i]] = static_cast<std::uint32_t>(i % k_folds);
  }

  // fold materialization is shared across grid points
  std::vector<std::vector<CompensationEntry>> fold_train(k_folds);
  std::vector<std::vector<CompensationEntry>> fold_test(k_folds);
  std::vector<std::vector<CohortKey>> fold_test_keys(k_folds);
  {
    std::vector<std::set<CohortKey>> seen(k_folds);
    for (const auto& e : entries) {
      const auto f = fold_of[e.cohort];
      for (std::uint32_t g = 0; g < k_folds; ++g) {
        if (g == f) {
          fold_test[g].push_back(e);
          if (seen[g].insert(e.cohort).second) {
            fold_test_keys[g].push_back(e.cohort);
          }
        } else {
          fold_train[g].push_back(e);
        }
      }
    }
  }

  std::vector<GridPoint> grid;
  grid.reserve(delta_grid.size() * eta_grid.size());
  for (double delta : delta_grid) {
    for (double eta : eta_grid) {
      grid.push_back({delta, eta, {}});
    }
  }

  const auto run_point = [&](GridPoint& point) {
    BayesHyperparams hp = base_hp;
    hp.delta = point.delta;
    hp.eta = point.eta;
    EvalAccumulator acc;
    for (std::uint32_t f = 0; f < k_folds; ++f) {
      SmoothOptions options = base_options;
      options.enumerate_cross_product = false;
      options.requested_cohorts = fold_test_keys[f];
      options.threads = 1;
      const auto smoothed =
          smooth_all(fold_train[f], trc, groups, hp, options);
      acc.add(smoothed.insights, fold_test[f], true);
    }
    point.report = acc.finalize();
  };

  if (base_options.threads <= 1) {
    for (auto& point : grid) run_point(point);
  } else {
#ifdef _OPENMP
    omp_set_num_threads(static_cast<int>(base_options.threads));
    const std::int64_t n = static_cast<std::int64_t>(grid.size());
#pragma omp parallel for schedule(dynamic)
    for (std::int64_t i = 0; i < n; ++i) {
      run_point(grid[static_cast<std::size_t>(i)]);
    }
#else
    for (auto& point : grid) run_point(point);
#endif
  }

  std::size_t best = 0;
  for (std::size_t i = 1; i < grid.size(); ++i) {
    const double di = std::abs(grid[i].report.ci80 - 0.8);
    const double db = std::abs(grid[best].report.ci80 - 0.8);
    if (di < db || (di == db && grid[i].report.rmse < grid[best].report.rmse)) {
      best = i;
    }
  }
  return {std::move(grid), best};
}

const char* to_string(ThresholdDimension dim) {
  switch (dim) {
    case ThresholdDimension::company: return "company";
    case ThresholdDimension::peer: return "peer";
    case ThresholdDimension::title: return "title";
    case ThresholdDimension::region: return "region";
  }
  return "?";
}

std::vector<SweepPoint> threshold_sweep(
    std::span<const CompensationEntry> train,
    std::span<const CompensationEntry> test, const TrcModel& trc,
    const PeerGroups& groups, const BayesHyperparams& hp,
    const SmoothOptions& base_options, ThresholdDimension dimension,
    std::span<const std::uint64_t> threshold_grid) {
  std::vector<SweepPoint> points;
  points.reserve(threshold_grid.size());
  for (auto threshold : threshold_grid) {
    SmoothOptions options = base_options;
    switch (dimension) {
      case ThresholdDimension::company: options.thresholds.company = threshold; break;
      case ThresholdDimension::peer: options.thresholds.peer = threshold; break;
      case ThresholdDimension::title: options.thresholds.title = threshold; break;
      case ThresholdDimension::region: options.thresholds.region = threshold; break;
    }
    const auto smoothed = smooth_all(train, trc, groups, hp, options);
    SweepPoint p;
    p.dimension = dimension;
    p.threshold = threshold;
    p.report = evaluate(smoothed.insights, test);
    p.eligible_cohorts = smoothed.insights.size();
    points.push_back(p);
  }
  return points;
}

}  // namespace compsight
