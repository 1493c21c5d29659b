#include "compsight/trc_baseline.hpp"

#include <istream>
#include <ostream>

#include "compsight/csv.hpp"
#include "compsight/stats.hpp"

#include "json.hpp"

namespace compsight {

const char* to_string(TrcLevel level) {
  switch (level) {
    case TrcLevel::title_region: return "title_region";
    case TrcLevel::title: return "title";
    case TrcLevel::global: return "global";
  }
  return "?";
}

const TrcEstimate& TrcModel::at(const std::string& title,
                                const std::string& region) const {
  auto it = estimates_.find({title, region});
  if (it == estimates_.end()) {
    throw NotFoundError("no (title, region) estimate for (" + title + ", " +
                        region + ")");
  }
  return it->second;
}

bool TrcModel::contains(const std::string& title,
                        const std::string& region) const {
  return estimates_.find({title, region}) != estimates_.end();
}

void TrcModel::insert(TrcEstimate est) {
  auto key = std::make_pair(est.title, est.region);
  estimates_[std::move(key)] = std::move(est);
}

HierarchicalMeanEstimator::HierarchicalMeanEstimator(
    std::uint64_t min_title_support, std::uint64_t min_region_support)
    : min_title_support_(min_title_support),
      min_region_support_(min_region_support) {
  if (min_title_support_ < 1 || min_region_support_ < 1) {
    throw ConfigError("support thresholds must be >= 1");
  }
}

TrcModel HierarchicalMeanEstimator::fit(
    std::span<const CompensationEntry> entries) const {
  if (entries.empty()) throw EmptyDatasetError("fit_trc: no entries");

  std::map<std::pair<std::string, std::string>, std::vector<double>> by_tr;
  std::map<std::string, std::vector<double>> by_title;
  std::map<std::string, std::uint64_t> region_count;
  std::vector<double> all;
  all.reserve(entries.size());
  for (const auto& e : entries) {
    by_tr[{e.cohort.title, e.cohort.region}].push_back(e.log_value);
    by_title[e.cohort.title].push_back(e.log_value);
    ++region_count[e.cohort.region];
    all.push_back(e.log_value);
  }

  const MeanVar global_mv = mean_var(all);
  const double global_mean_var =
      global_mv.n > 1 ? global_mv.var / static_cast<double>(global_mv.n) : 0.0;

  std::map<std::string, MeanVar> title_mv;
  for (const auto& [title, values] : by_title) {
    title_mv[title] = mean_var(values);
  }

  TrcModel model;
  for (const auto& [key, values] : by_tr) {
    const auto& [title, region] = key;
    const auto& tmv = title_mv[title];
    const bool title_ok = tmv.n >= min_title_support_;
    const bool region_ok = region_count[region] >= min_region_support_;

    TrcEstimate est;
    est.title = title;
    est.region = region;
    if (title_ok && region_ok) {
      const MeanVar mv = mean_var(values);
      est.level = TrcLevel::title_region;
      est.mean = mv.mean;
      est.support = mv.n;
      if (mv.n > 1) {
        est.mean_variance = mv.var / static_cast<double>(mv.n);
      } else {
        // a single entry pins the mean but not its uncertainty; borrow the
        // fallback level's
        est.mean_variance =
            title_ok && tmv.n > 1
                ? tmv.var / static_cast<double>(tmv.n)
                : global_mean_var;
      }
    } else if (title_ok) {
      est.level = TrcLevel::title;
      est.mean = tmv.mean;
      est.support = tmv.n;
      est.mean_variance =
          tmv.n > 1 ? tmv.var / static_cast<double>(tmv.n) : global_mean_var;
    } else {
      est.level = TrcLevel::global;
      est.mean = global_mv.mean;
      est.support = global_mv.n;
      est.mean_variance = global_mean_var;
    }
    model.insert(std::move(est));
  }
  return model;
}

TrcModel fit_trc(std::span<const CompensationEntry> entries,
                 std::uint64_t min_title_support,
                 std::uint64_t min_region_support) {
  return HierarchicalMeanEstimator(min_title_support, min_region_support)
      .fit(entries);
}

std::vector<Residual> residualize(std::span<const CompensationEntry> entries,
                                  const TrcModel& trc) {
  std::vector<Residual> out;
  out.reserve(entries.size());
  for (const auto& e : entries) {
    const auto& est = trc.at(e.cohort.title, e.cohort.region);
    out.push_back({e.cohort.company, e.log_value - est.mean, e.cohort});
  }
  return out;
}

void write_trc_jsonl(const TrcModel& model, std::ostream& out) {
  for (const auto& [key, est] : model.estimates()) {
    nlohmann::json j{{"title", est.title},
                     {"region", est.region},
                     {"mean", est.mean},
                     {"mean_variance", est.mean_variance},
                     {"support", est.support},
                     {"level", to_string(est.level)}};
    out << j.dump() << '\n';
  }
}

TrcModel read_trc_jsonl(std::istream& in) {
  TrcModel model;
  std::string line;
  std::size_t line_no = 0;
  while (next_line(in, line, line_no)) {
    nlohmann::json j = nlohmann::json::parse(line);
    TrcEstimate est;
    est.title = j.at("title").get<std::string>();
    est.region = j.at("region").get<std::string>();
    est.mean = j.at("mean").get<double>();
    est.mean_variance = j.at("mean_variance").get<double>();
    est.support = j.at("support").get<std::uint64_t>();
    const auto level = j.at("level").get<std::string>();
    est.level = level == "title_region" ? TrcLevel::title_region
                : level == "title"      ? TrcLevel::title
                                        : TrcLevel::global;
    model.insert(std::move(est));
  }
  return model;
}

}  // namespace compsight
