#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace skillcal::csv {

// Splits one comma-delimited line. Double-quoted fields may contain commas and
// escaped quotes (""). A trailing '\r' is stripped.
std::vector<std::string> split_line(std::string_view line);

// Quotes a field only when it contains a comma, quote or newline.
std::string escape(std::string_view field);

struct Table {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
  std::vector<std::size_t> line_numbers;  // 1-based source line of each row

  // Index of a header column, or -1.
  long column(std::string_view name) const;
};

// Reads a whole file. Blank lines are skipped. Throws Io if unreadable.
Table read_file(const std::filesystem::path& path);

std::string format_double(double value);  // shortest round-trip representation

}  // namespace skillcal::csv
