#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace compsight {

// Minimal RFC-4180-style CSV: comma separator, optional double-quote
// quoting with "" escapes. No embedded newlines inside quoted fields.
std::vector<std::string> split_csv_row(const std::string& line,
                                       std::size_t line_no);

// Quotes a field only when it contains a comma, quote, or leading/trailing
// whitespace.
std::string csv_field(const std::string& value);

// Reads the next non-empty line; returns false at EOF. Increments line_no
// for every physical line consumed (blank lines included).
bool next_line(std::istream& in, std::string& line, std::size_t& line_no);

}  // namespace compsight
