#pragma once

#include <istream>
#include <string>
#include <string_view>
#include <vector>

namespace popmir {

struct CsvRow {
  std::size_t line = 0;  // 1-based physical line where the record starts
  std::vector<std::string> fields;
};

/// Reads RFC 4180 style CSV: comma separated, optional double quoting with
/// "" escapes, LF or CRLF line endings. Blank lines are skipped.
std::vector<CsvRow> read_csv(std::istream& in);
std::vector<CsvRow> read_csv(std::string_view text);

/// Quotes a field only when it contains a comma, quote or newline.
std::string csv_escape(std::string_view field);

/// Shortest decimal form that round-trips to the same double.
std::string format_double(double value);

}  // namespace popmir
