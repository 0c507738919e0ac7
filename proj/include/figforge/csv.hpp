#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <vector>

namespace figforge {

// RFC 4180-style: quoted fields may hold commas, quotes ("") and newlines.
using CsvRow = std::map<std::string, std::string>;

std::vector<std::vector<std::string>> parse_csv(std::string_view text);
// First row is the header. Rows shorter than the header are a ValidationError;
// blank lines are skipped.
std::vector<CsvRow> read_csv(const std::filesystem::path& path);
// Errors name the file and the missing column.
const std::string& csv_field(const CsvRow& row, const std::string& column, const std::filesystem::path& source);

std::string csv_escape(std::string_view field);
std::string csv_line(const std::vector<std::string>& fields);

}  // namespace figforge
