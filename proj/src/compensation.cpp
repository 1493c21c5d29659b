#include "compsight/compensation.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <istream>
#include <ostream>

#include "compsight/csv.hpp"

#include "json.hpp"

namespace compsight {

std::string to_string(const CohortKey& key) {
  std::string s = "(" + key.title + ", " + key.region;
  if (key.has_company()) s += ", " + key.company;
  return s + ")";
}

CompensationEntry make_entry(std::string title, std::string region,
                             CompanyId company, double value,
                             std::string comp_type) {
  CompensationEntry e;
  e.cohort.title = canonicalize(title);
  e.cohort.region = canonicalize(region);
  e.cohort.company = std::move(company);
  if (e.cohort.title.empty() || e.cohort.region.empty()) {
    throw ConfigError("entry requires non-empty title and region");
  }
  if (!(value > 0.0)) throw ConfigError("entry value must be > 0");
  e.value = value;
  e.log_value = std::log(value);
  e.comp_type = std::move(comp_type);
  return e;
}

namespace {

bool parse_positive(const std::string& s, double& out) {
  const char* begin = s.data();
  const char* end = begin + s.size();
  auto [p, ec] = std::from_chars(begin, end, out);
  return ec == std::errc{} && p == end && out > 0.0 && std::isfinite(out);
}

bool row_to_entry(const std::string& title, const std::string& region,
                  const std::string& company, const std::string& value_str,
                  const std::string& comp_type, std::size_t line,
                  OnRowError on_error, ParseReport* report,
                  std::vector<CompensationEntry>& out) {
  double value = 0.0;
  std::string reason;
  if (canonicalize(title).empty() || canonicalize(region).empty()) {
    reason = "empty title or region";
  } else if (!parse_positive(value_str, value)) {
    reason = "value must be a positive number";
  } else if (!company.empty() && !valid_company_id(company)) {
    reason = "invalid company token";
  } else if (!comp_type.empty() && comp_type != "base" &&
             comp_type != "total") {
    reason = "comp_type must be base or total";
  }
  if (!reason.empty()) {
    if (on_error == OnRowError::fail_fast) throw ParseError(line, reason);
    if (report) report->note(line, reason);
    return false;
  }
  out.push_back(make_entry(title, region, company, value,
                           comp_type.empty() ? "base" : comp_type));
  if (report) ++report->rows_used;
  return true;
}

}  // namespace

std::vector<CompensationEntry> read_entries_csv(std::istream& in,
                                                OnRowError on_error,
                                                ParseReport* report) {
  std::vector<CompensationEntry> entries;
  std::string line;
  std::size_t line_no = 0;
  bool first = true;
  while (next_line(in, line, line_no)) {
    if (report) ++report->rows_read;
    std::vector<std::string> f;
    try {
      f = split_csv_row(line, line_no);
    } catch (const ParseError& e) {
      if (on_error == OnRowError::fail_fast) throw;
      if (report) report->note(line_no, e.what());
      continue;
    }
    if (first) {
      first = false;
      if (!f.empty() && canonicalize(f[0]) == "title") continue;
    }
    if (f.size() < 4) {
      if (on_error == OnRowError::fail_fast) {
        throw ParseError(line_no, "expected title,region,company,value");
      }
      if (report) report->note(line_no, "expected title,region,company,value");
      continue;
    }
    row_to_entry(f[0], f[1], f[2], f[3], f.size() > 4 ? f[4] : "", line_no,
                 on_error, report, entries);
  }
  return entries;
}

std::vector<CompensationEntry> read_entries_jsonl(std::istream& in,
                                                  OnRowError on_error,
                                                  ParseReport* report) {
  std::vector<CompensationEntry> entries;
  std::string line;
  std::size_t line_no = 0;
  while (next_line(in, line, line_no)) {
    if (report) ++report->rows_read;
    nlohmann::json j = nlohmann::json::parse(line, nullptr, false);
    if (j.is_discarded() || !j.is_object() || !j.contains("title") ||
        !j.contains("region") || !j.contains("value") ||
        !j["value"].is_number()) {
      if (on_error == OnRowError::fail_fast) {
        throw ParseError(line_no, "malformed entry object");
      }
      if (report) report->note(line_no, "malformed entry object");
      continue;
    }
    char value_buf[64];
    std::snprintf(value_buf, sizeof value_buf, "%.17g",
                  j["value"].get<double>());
    row_to_entry(j["title"].get<std::string>(), j["region"].get<std::string>(),
                 j.value("company", std::string{}), value_buf,
                 j.value("comp_type", std::string{}), line_no, on_error,
                 report, entries);
  }
  return entries;
}

void write_entries_csv(const std::vector<CompensationEntry>& entries,
                       std::ostream& out) {
  out << "title,region,company,value,comp_type\n";
  char buf[64];
  for (const auto& e : entries) {
    std::snprintf(buf, sizeof buf, "%.17g", e.value);
    out << csv_field(e.cohort.title) << ',' << csv_field(e.cohort.region)
        << ',' << csv_field(e.cohort.company) << ',' << buf << ','
        << e.comp_type << '\n';
  }
}

}  // namespace compsight
