#pragma once

#include <compare>
#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "compsight/common.hpp"
#include "compsight/transitions.hpp"  // ParseReport, OnRowError

namespace compsight {

// (title, region[, company]) identity. Title and region are canonical:
// case-folded and whitespace-normalized. An empty company marks a
// (title, region) cohort.
struct CohortKey {
  std::string title;
  std::string region;
  CompanyId company;

  bool has_company() const { return !company.empty(); }
  CohortKey title_region() const { return {title, region, {}}; }
  auto operator<=>(const CohortKey&) const = default;
};

std::string to_string(const CohortKey& key);

// One de-identified submission, annualized, single currency per dataset.
struct CompensationEntry {
  CohortKey cohort;
  double value = 0.0;      // > 0
  double log_value = 0.0;  // ln(value)
  std::string comp_type = "base";  // {base, total}
};

CompensationEntry make_entry(std::string title, std::string region,
                             CompanyId company, double value,
                             std::string comp_type = "base");

// CSV columns: title,region,company,value[,comp_type]; company may be
// empty. JSONL objects use the same field names.
std::vector<CompensationEntry> read_entries_csv(std::istream& in,
                                                OnRowError on_error,
                                                ParseReport* report = nullptr);
std::vector<CompensationEntry> read_entries_jsonl(
    std::istream& in, OnRowError on_error, ParseReport* report = nullptr);
void write_entries_csv(const std::vector<CompensationEntry>& entries,
                       std::ostream& out);

}  // namespace compsight
