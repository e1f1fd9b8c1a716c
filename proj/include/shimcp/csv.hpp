#pragma once

#include <string>
#include <vector>

namespace shimcp {

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  int column(const std::string& name) const;  // -1 when absent
};

// RFC 4180 reader: quoted fields with doubled quotes, CRLF or LF line ends,
// mandatory header row.
CsvTable read_csv_file(const std::string& path);
CsvTable read_csv_string(const std::string& text);

std::string csv_escape(const std::string& field);
std::string format_double(double v);  // shortest 17-significant-digit form

}  // namespace shimcp
