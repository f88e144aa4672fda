#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace perfvox {

// Plain comma-separated rows; fields are trimmed, quoting is not supported.
struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
  std::vector<std::size_t> line_numbers;  // 1-based source line of each row

  // Column index by name, or throws ParseError.
  std::size_t column(std::string_view name) const;
};

std::vector<std::string> split_csv_line(std::string_view line);
CsvTable read_csv(const std::filesystem::path& path);

double parse_double(std::string_view text, std::string_view what);
long long parse_int(std::string_view text, std::string_view what);

// Shortest round-trip representation.
std::string format_double(double value);

void write_text_file(const std::filesystem::path& path, std::string_view content);
std::string read_text_file(const std::filesystem::path& path);

}  // namespace perfvox
