#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace sfpl::csv {

struct Table {
  char delimiter = ',';
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
  // 1-based source line of each row, for error messages.
  std::vector<std::size_t> lines;

  // Index of a header column, or -1.
  int column(const std::string& name) const;
};

// Reads a delimiter-separated table with a header line. The delimiter is the
// first of ',', '\t', ';' that occurs in the header. Blank lines are skipped,
// fields are trimmed, and double-quoted fields may contain the delimiter.
// Throws ValidationError on ragged rows.
Table read(std::istream& in, const std::string& source);
Table read_file(const std::string& path);

std::vector<std::string> split_line(const std::string& line, char delimiter);

double parse_double(const std::string& field, const std::string& context);
long long parse_integer(const std::string& field, const std::string& context);

// Shortest round-trip decimal representation.
std::string format_double(double v);

}  // namespace sfpl::csv
