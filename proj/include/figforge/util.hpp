#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace figforge {

// --- hashing / encoding -------------------------------------------------
std::string sha256_hex(std::string_view data);
std::string sha256_hex(std::span<const std::uint8_t> data);
std::string file_sha256(const std::filesystem::path& path);
std::string base64_encode(std::string_view data);
std::string base64_decode(std::string_view text);

// --- files --------------------------------------------------------------
std::string read_file(const std::filesystem::path& path);
// Writes to a sibling temp file then renames over the destination.
void write_file_atomic(const std::filesystem::path& path, std::string_view data);

// --- text ---------------------------------------------------------------
std::string trim(std::string_view s);
std::string to_lower(std::string_view s);
// Collapses every whitespace run to one space and trims the ends.
std::string normalize_whitespace(std::string_view s);
std::vector<std::string> split(std::string_view s, char sep);
std::vector<std::string> split_whitespace(std::string_view s);
bool starts_with_ci(std::string_view s, std::string_view prefix);
bool is_valid_utf8(std::string_view s);
std::u32string utf8_to_u32(std::string_view s);
std::string u32_to_utf8(std::u32string_view s);

// Levenshtein distance over code points.
std::size_t edit_distance(std::string_view a, std::string_view b);
// Distance divided by the longer length; 0 for two empty strings.
double normalized_edit_distance(std::string_view a, std::string_view b);

std::optional<double> parse_double(std::string_view s);
std::string format_fixed(double value, int decimals);

}  // namespace figforge
