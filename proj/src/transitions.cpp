#include "compsight/transitions.hpp"

#include <algorithm>
#include <istream>
#include <map>
#include <ostream>
#include <set>

#include "compsight/csv.hpp"

namespace compsight {

void ParseReport::note(std::size_t line, const std::string& msg) {
  ++malformed_skipped;
  if (messages.size() < 50) {
    messages.push_back("line " + std::to_string(line) + ": " + msg);
  }
}

std::optional<std::uint32_t> TransitionDataset::index_of(
    const CompanyId& id) const {
  auto it = index_.find(id);
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

std::span<const std::uint32_t> TransitionDataset::adjacency(
    std::uint32_t c) const {
  return {adj_flat_.data() + adj_offsets_[c],
          adj_offsets_[c + 1] - adj_offsets_[c]};
}

bool TransitionDataset::adjacent(std::uint32_t a, std::uint32_t b) const {
  const auto adj = adjacency(a);
  return std::binary_search(adj.begin(), adj.end(), b);
}

std::uint64_t TransitionDataset::pair_count(std::uint32_t origin,
                                            std::uint32_t dest) const {
  PairCount key{origin, dest, 0};
  auto it = std::lower_bound(pairs_.begin(), pairs_.end(), key,
                             [](const PairCount& a, const PairCount& b) {
                               return std::tie(a.origin, a.destination) <
                                      std::tie(b.origin, b.destination);
                             });
  if (it != pairs_.end() && it->origin == origin && it->destination == dest) {
    return it->count;
  }
  return 0;
}

std::vector<std::pair<std::uint32_t, std::uint32_t>>
TransitionDataset::expand_pairs() const {
  std::vector<std::pair<std::uint32_t, std::uint32_t>> out;
  out.reserve(total_transitions_);
  for (const auto& p : pairs_) {
    for (std::uint64_t i = 0; i < p.count; ++i) {
      out.emplace_back(p.origin, p.destination);
    }
  }
  return out;
}

void TransitionDataset::Builder::add(const CompanyId& origin,
                                     const CompanyId& destination,
                                     std::uint64_t count) {
  if (count == 0) return;
  if (origin == destination) {
    self_loops_dropped += count;
    return;
  }
  for (std::uint64_t i = 0; i < count; ++i) {
    raw_pairs.emplace_back(origin, destination);
  }
}

TransitionDataset TransitionDataset::Builder::build() && {
  TransitionDataset d;
  d.self_loops_dropped_ = self_loops_dropped;

  std::set<CompanyId> ids(isolated.begin(), isolated.end());
  for (const auto& [o, t] : raw_pairs) {
    ids.insert(o);
    ids.insert(t);
  }
  d.companies_.assign(ids.begin(), ids.end());
  d.index_.reserve(d.companies_.size());
  for (std::uint32_t i = 0; i < d.companies_.size(); ++i) {
    d.index_.emplace(d.companies_[i], i);
  }

  std::map<std::pair<std::uint32_t, std::uint32_t>, std::uint64_t> counts;
  for (const auto& [o, t] : raw_pairs) {
    ++counts[{d.index_.at(o), d.index_.at(t)}];
  }
  d.pairs_.reserve(counts.size());
  for (const auto& [key, n] : counts) {
    d.pairs_.push_back({key.first, key.second, n});
    d.total_transitions_ += n;
  }

  const std::size_t nc = d.companies_.size();
  d.occurrence_.assign(nc, 0);
  std::vector<std::set<std::uint32_t>> adj(nc);
  for (const auto& p : d.pairs_) {
    d.occurrence_[p.origin] += p.count;
    d.occurrence_[p.destination] += p.count;
    adj[p.origin].insert(p.destination);
    adj[p.destination].insert(p.origin);
  }
  d.adj_offsets_.assign(nc + 1, 0);
  for (std::size_t i = 0; i < nc; ++i) {
    d.adj_offsets_[i + 1] = d.adj_offsets_[i] + adj[i].size();
  }
  d.adj_flat_.reserve(d.adj_offsets_[nc]);
  for (std::size_t i = 0; i < nc; ++i) {
    d.adj_flat_.insert(d.adj_flat_.end(), adj[i].begin(), adj[i].end());
  }
  return d;
}

namespace {

void add_checked(TransitionDataset::Builder& b, const std::string& origin,
                 const std::string& destination, std::size_t line,
                 OnRowError on_error, ParseReport* report) {
  if (!valid_company_id(origin) || !valid_company_id(destination)) {
    if (on_error == OnRowError::fail_fast) {
      throw ParseError(line, "invalid company token");
    }
    if (report) report->note(line, "invalid company token");
    return;
  }
  if (report) ++report->rows_used;
  b.add(origin, destination);
}

TransitionDataset parse_csv(std::istream& in, OnRowError on_error,
                            ParseReport* report) {
  TransitionDataset::Builder b;
  std::string line;
  std::size_t line_no = 0;
  bool first = true;
  while (next_line(in, line, line_no)) {
    if (report) ++report->rows_read;
    std::vector<std::string> fields;
    try {
      fields = split_csv_row(line, line_no);
    } catch (const ParseError& e) {
      if (on_error == OnRowError::fail_fast) throw;
      if (report) report->note(line_no, e.what());
      continue;
    }
    if (first) {
      first = false;
      if (!fields.empty() && canonicalize(fields[0]) == "origin") continue;
    }
    if (fields.size() < 2) {
      if (on_error == OnRowError::fail_fast) {
        throw ParseError(line_no, "expected origin,destination");
      }
      if (report) report->note(line_no, "expected origin,destination");
      continue;
    }
    add_checked(b, fields[0], fields[1], line_no, on_error, report);
  }
  return std::move(b).build();
}

TransitionDataset parse_jsonl(std::istream& in, OnRowError on_error,
                              ParseReport* report) {
  TransitionDataset::Builder b;
  std::string line;
  std::size_t line_no = 0;
  while (next_line(in, line, line_no)) {
    if (report) ++report->rows_read;
    nlohmann::json j = nlohmann::json::parse(line, nullptr, false);
    if (j.is_discarded() || !j.is_object() || !j.contains("origin") ||
        !j.contains("destination") || !j["origin"].is_string() ||
        !j["destination"].is_string()) {
      if (on_error == OnRowError::fail_fast) {
        throw ParseError(line_no, "malformed transition object");
      }
      if (report) report->note(line_no, "malformed transition object");
      continue;
    }
    add_checked(b, j["origin"].get<std::string>(),
                j["destination"].get<std::string>(), line_no, on_error,
                report);
  }
  return std::move(b).build();
}

}  // namespace

TransitionDataset parse_transitions(std::istream& in, TransitionFormat format,
                                    OnRowError on_error, ParseReport* report) {
  TransitionDataset d = format == TransitionFormat::csv
                            ? parse_csv(in, on_error, report)
                            : parse_jsonl(in, on_error, report);
  if (report) report->self_loops_dropped = d.self_loops_dropped();
  return d;
}

TransitionDataset derive_transitions_from_histories(
    const std::vector<std::pair<std::string, std::vector<CompanyId>>>&
        histories) {
  TransitionDataset::Builder b;
  for (const auto& [member, companies] : histories) {
    (void)member;
    // collapse consecutive duplicates before pairing
    std::vector<CompanyId> collapsed;
    for (const auto& c : companies) {
      if (collapsed.empty() || collapsed.back() != c) collapsed.push_back(c);
    }
    for (std::size_t i = 1; i < collapsed.size(); ++i) {
      b.add(collapsed[i - 1], collapsed[i]);
    }
  }
  return std::move(b).build();
}

TransitionDataset filter_by_frequency(const TransitionDataset& dataset,
                                      std::uint64_t min_occurrences,
                                      OccurrenceCounting counting) {
  if (min_occurrences < 1) {
    throw ConfigError("min_occurrences must be >= 1");
  }
  const std::size_t nc = dataset.company_count();
  std::vector<std::uint64_t> count(nc, 0);
  for (const auto& p : dataset.pairs()) {
    if (counting != OccurrenceCounting::destination_only) {
      count[p.origin] += p.count;
    }
    if (counting != OccurrenceCounting::origin_only) {
      count[p.destination] += p.count;
    }
  }
  std::vector<bool> keep(nc);
  for (std::size_t i = 0; i < nc; ++i) keep[i] = count[i] >= min_occurrences;

  TransitionDataset::Builder b;
  for (const auto& p : dataset.pairs()) {
    if (keep[p.origin] && keep[p.destination]) {
      b.add(dataset.id_of(p.origin), dataset.id_of(p.destination), p.count);
    }
  }
  // Retained companies stay even if all their pairs were removed.
  for (std::uint32_t i = 0; i < nc; ++i) {
    if (keep[i]) b.touch(dataset.id_of(i));
  }
  return std::move(b).build();
}

void write_transitions_csv(const TransitionDataset& dataset,
                           std::ostream& out) {
  out << "origin,destination\n";
  for (const auto& p : dataset.pairs()) {
    for (std::uint64_t i = 0; i < p.count; ++i) {
      out << csv_field(dataset.id_of(p.origin)) << ','
          << csv_field(dataset.id_of(p.destination)) << '\n';
    }
  }
}

nlohmann::json dataset_summary(const TransitionDataset& dataset,
                               const ParseReport* report) {
  nlohmann::json j;
  j["companies"] = dataset.company_count();
  j["distinct_pairs"] = dataset.pairs().size();
  j["total_transitions"] = dataset.total_transitions();
  j["self_loops_dropped"] = dataset.self_loops_dropped();
  if (report) {
    j["rows_read"] = report->rows_read;
    j["rows_used"] = report->rows_used;
    j["malformed_skipped"] = report->malformed_skipped;
  }
  return j;
}

}  // namespace compsight
