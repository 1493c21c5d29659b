#include "compsight/synth_gen.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <ostream>
#include <istream>
#include <set>

#include "json.hpp"

namespace compsight {

void SynthConfig::validate() const {
  if (n_clusters < 1 || companies_per_cluster < 1 || n_titles < 1 ||
      n_regions < 1) {
    throw ConfigError("synth counts must be >= 1");
  }
  if (!(intra_transition_rate > 0.0)) {
    throw ConfigError("intra_transition_rate must be > 0");
  }
  if (inter_transition_rate < 0.0 ||
      !(intra_transition_rate > inter_transition_rate)) {
    throw ConfigError("intra rate must exceed inter rate");
  }
  if (!(company_offset_sd > 0.0) || !(noise_sd > 0.0)) {
    throw ConfigError("offset and noise SDs must be > 0");
  }
  if (cluster_offset_sd < 0.0) {
    throw ConfigError("cluster_offset_sd must be >= 0");
  }
  if (!(trc_mean_low <= trc_mean_high)) {
    throw ConfigError("trc mean range is inverted");
  }
}

double GroundTruth::true_log_mean(const CohortKey& key) const {
  const double trc = true_trc_mean.at({key.title, key.region});
  const double offset =
      key.has_company() ? true_company_offset.at(key.company) : 0.0;
  return trc + offset;
}

namespace {

std::string padded(const char* prefix, std::uint32_t i, int width) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%s%0*u", prefix, width, i);
  return buf;
}

}  // namespace

SynthData generate(const SynthConfig& config) {
  config.validate();
  Rng rng(config.seed);
  SynthData data;

  const std::uint32_t n_companies =
      config.n_clusters * config.companies_per_cluster;
  std::vector<CompanyId> companies(n_companies);
  for (std::uint32_t i = 0; i < n_companies; ++i) {
    companies[i] = padded("c", i, 4);
    data.truth.cluster_of[companies[i]] = i / config.companies_per_cluster;
  }

  // transition graph: Poisson multiplicity per ordered pair
  TransitionDataset::Builder builder;
  for (std::uint32_t u = 0; u < n_companies; ++u) {
    builder.touch(companies[u]);
    for (std::uint32_t v = 0; v < n_companies; ++v) {
      if (u == v) continue;
      const bool intra = data.truth.cluster_of[companies[u]] ==
                         data.truth.cluster_of[companies[v]];
      const double rate = intra ? config.intra_transition_rate
                                : config.inter_transition_rate;
      const auto count = rng.poisson(rate);
      if (count > 0) builder.add(companies[u], companies[v], count);
    }
  }
  data.transitions = std::move(builder).build();

  // planted (title, region) means and company offsets
  std::vector<std::string> titles(config.n_titles);
  std::vector<std::string> regions(config.n_regions);
  for (std::uint32_t t = 0; t < config.n_titles; ++t) {
    titles[t] = padded("title", t, 2);
  }
  for (std::uint32_t r = 0; r < config.n_regions; ++r) {
    regions[r] = padded("region", r, 2);
  }
  for (const auto& t : titles) {
    for (const auto& r : regions) {
      data.truth.true_trc_mean[{t, r}] =
          rng.uniform(config.trc_mean_low, config.trc_mean_high);
    }
  }
  std::vector<double> cluster_offset(config.n_clusters, 0.0);
  if (config.cluster_offset_sd > 0.0) {
    for (auto& o : cluster_offset) o = rng.normal(0.0, config.cluster_offset_sd);
  }
  for (std::uint32_t i = 0; i < n_companies; ++i) {
    data.truth.true_company_offset[companies[i]] =
        cluster_offset[i / config.companies_per_cluster] +
        rng.normal(0.0, config.company_offset_sd);
  }
  data.truth.true_noise_sd = config.noise_sd;

  // entries for every (title, region, company) cohort
  for (const auto& t : titles) {
    for (const auto& r : regions) {
      const double trc = data.truth.true_trc_mean[{t, r}];
      for (std::uint32_t i = 0; i < n_companies; ++i) {
        const std::uint64_t n =
            config.entries_dist == SynthConfig::EntriesDist::poisson
                ? rng.poisson(config.entries_lambda)
                : config.entries_fixed;
        const double mean = trc + data.truth.true_company_offset[companies[i]];
        for (std::uint64_t j = 0; j < n; ++j) {
          const double log_value = rng.normal(mean, config.noise_sd);
          data.entries.push_back(
              make_entry(t, r, companies[i], std::exp(log_value)));
        }
      }
    }
  }
  return data;
}

Holdout holdout_empty_cohorts(const std::vector<CompensationEntry>& entries,
                              const GroundTruth& truth, double fraction,
                              std::uint64_t seed) {
  if (!(fraction >= 0.0 && fraction < 1.0)) {
    throw ConfigError("holdout fraction must lie in [0,1)");
  }
  std::set<CohortKey> keys;
  for (const auto& e : entries) keys.insert(e.cohort);
  std::vector<CohortKey> ordered(keys.begin(), keys.end());
  Rng rng(seed);
  rng.shuffle(ordered);
  const auto n_hidden = static_cast<std::size_t>(
      std::llround(fraction * static_cast<double>(ordered.size())));

  Holdout h;
  std::set<CohortKey> hidden_keys(ordered.begin(),
                                  ordered.begin() + static_cast<std::ptrdiff_t>(
                                                        n_hidden));
  for (const auto& key : hidden_keys) {
    h.hidden[key] = {truth.true_log_mean(key), truth.true_noise_sd};
  }
  for (const auto& e : entries) {
    if (hidden_keys.count(e.cohort)) h.hidden_entries.push_back(e);
    else h.visible.push_back(e);
  }
  return h;
}

void write_ground_truth_json(const GroundTruth& truth, std::ostream& out) {
  nlohmann::json j;
  j["noise_sd"] = truth.true_noise_sd;
  auto& clusters = j["cluster_of"] = nlohmann::json::object();
  for (const auto& [c, k] : truth.cluster_of) clusters[c] = k;
  auto& offsets = j["company_offset"] = nlohmann::json::object();
  for (const auto& [c, o] : truth.true_company_offset) offsets[c] = o;
  auto& trc = j["trc_mean"] = nlohmann::json::array();
  for (const auto& [key, mean] : truth.true_trc_mean) {
    trc.push_back({{"title", key.first}, {"region", key.second},
                   {"mean", mean}});
  }
  out << j.dump(2) << '\n';
}

GroundTruth read_ground_truth_json(std::istream& in) {
  nlohmann::json j = nlohmann::json::parse(in);
  GroundTruth truth;
  truth.true_noise_sd = j.at("noise_sd").get<double>();
  for (const auto& [c, k] : j.at("cluster_of").items()) {
    truth.cluster_of[c] = k.get<std::uint32_t>();
  }
  for (const auto& [c, o] : j.at("company_offset").items()) {
    truth.true_company_offset[c] = o.get<double>();
  }
  for (const auto& rec : j.at("trc_mean")) {
    truth.true_trc_mean[{rec.at("title").get<std::string>(),
                         rec.at("region").get<std::string>()}] =
        rec.at("mean").get<double>();
  }
  return truth;
}

}  // namespace compsight
