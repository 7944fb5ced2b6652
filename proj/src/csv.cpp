#include "popmir/csv.h"

#include <charconv>
#include <cmath>
#include <sstream>

#include "popmir/error.h"

namespace popmir {

std::vector<CsvRow> read_csv(std::istream& in) {
  std::vector<CsvRow> rows;
  CsvRow row;
  std::string field;
  bool in_quotes = false;
  bool field_started = false;
  std::size_t line = 1;
  row.line = 1;

  auto end_field = [&] {
    row.fields.push_back(std::move(field));
    field.clear();
    field_started = false;
  };
  auto end_record = [&] {
    bool blank = row.fields.empty() && !field_started && field.empty();
    if (!blank) {
      end_field();
      rows.push_back(std::move(row));
    }
    row = CsvRow{};
    row.line = line + 1;
  };

  char c;
  while (in.get(c)) {
    if (in_quotes) {
      if (c == '"') {
        if (in.peek() == '"') {
          in.get(c);
          field.push_back('"');
        } else {
          in_quotes = false;
        }
      } else {
        if (c == '\n') ++line;
        field.push_back(c);
      }
      continue;
    }
    switch (c) {
      case '"':
        in_quotes = true;
        field_started = true;
        break;
      case ',':
        end_field();
        field_started = true;
        break;
      case '\r':
        if (in.peek() != '\n') field.push_back(c);
        break;
      case '\n':
        end_record();
        ++line;
        break;
      default:
        field.push_back(c);
        field_started = true;
    }
  }
  if (in_quotes) {
    throw ValidationError("csv: unterminated quoted field starting on line " +
                          std::to_string(row.line));
  }
  end_record();
  return rows;
}

std::vector<CsvRow> read_csv(std::string_view text) {
  std::istringstream in{std::string(text)};
  return read_csv(in);
}

std::string csv_escape(std::string_view field) {
  if (field.find_first_of(",\"\n\r") == std::string_view::npos) {
    return std::string(field);
  }
  std::string out = "\"";
  for (char c : field) {
    if (c == '"') out.push_back('"');
    out.push_back(c);
  }
  out.push_back('"');
  return out;
}

std::string format_double(double value) {
  if (std::isnan(value)) return "nan";
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), value);
  return std::string(buf, res.ptr);
}

}  // namespace popmir
