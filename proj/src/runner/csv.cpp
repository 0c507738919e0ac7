#include "figforge/csv.hpp"

#include "figforge/error.hpp"
#include "figforge/util.hpp"

namespace figforge {

std::vector<std::vector<std::string>> parse_csv(std::string_view text) {
  std::vector<std::vector<std::string>> rows;
  std::vector<std::string> row;
  std::string field;
  bool quoted = false;
  bool any = false;  // current row has content
  for (std::size_t i = 0; i < text.size(); ++i) {
    const char c = text[i];
    if (quoted) {
      if (c == '"' && i + 1 < text.size() && text[i + 1] == '"') {
        field.push_back('"');
        ++i;
      } else if (c == '"') {
        quoted = false;
      } else {
        field.push_back(c);
      }
      continue;
    }
    if (c == '"') {
      quoted = true;
      any = true;
    } else if (c == ',') {
      row.push_back(std::move(field));
      field.clear();
      any = true;
    } else if (c == '\n' || c == '\r') {
      if (c == '\r' && i + 1 < text.size() && text[i + 1] == '\n') ++i;
      if (any || !field.empty()) {
        row.push_back(std::move(field));
        rows.push_back(std::move(row));
      }
      row.clear();
      field.clear();
      any = false;
    } else {
      field.push_back(c);
      any = true;
    }
  }
  if (quoted) throw ValidationError("CSV has an unterminated quoted field");
  if (any || !field.empty()) {
    row.push_back(std::move(field));
    rows.push_back(std::move(row));
  }
  return rows;
}

std::vector<CsvRow> read_csv(const std::filesystem::path& path) {
  if (!std::filesystem::is_regular_file(path)) throw FileNotFound("file not found: " + path.string());
  const auto rows = parse_csv(read_file(path));
  if (rows.empty()) throw EmptyInput(path.string() + " is empty");
  std::vector<std::string> header;
  for (const auto& h : rows[0]) header.push_back(trim(h));
  std::vector<CsvRow> out;
  for (std::size_t r = 1; r < rows.size(); ++r) {
    if (rows[r].size() < header.size()) {
      throw ValidationError(path.string() + ": row " + std::to_string(r + 1) + " has " +
                            std::to_string(rows[r].size()) + " fields, expected " + std::to_string(header.size()));
    }
    CsvRow row;
    for (std::size_t i = 0; i < header.size(); ++i) row[header[i]] = trim(rows[r][i]);
    out.push_back(std::move(row));
  }
  return out;
}

const std::string& csv_field(const CsvRow& row, const std::string& column, const std::filesystem::path& source) {
  const auto it = row.find(column);
  if (it == row.end()) throw ValidationError(source.string() + " has no '" + column + "' column");
  return it->second;
}

std::string csv_escape(std::string_view field) {
  if (field.find_first_of(",\"\n\r") == std::string_view::npos) return std::string(field);
  std::string out = "\"";
  for (char c : field) {
    if (c == '"') out.push_back('"');
    out.push_back(c);
  }
  return out + "\"";
}

std::string csv_line(const std::vector<std::string>& fields) {
  std::string out;
  for (std::size_t i = 0; i < fields.size(); ++i) {
    if (i) out.push_back(',');
    out += csv_escape(fields[i]);
  }
  return out + "\n";
}

}  // namespace figforge
