#include "figforge/reply_format.hpp"

#include <cctype>

#include "figforge/util.hpp"

namespace figforge {

namespace {

std::optional<std::pair<std::string, std::string>> split_key(std::string_view line) {
  const auto colon = line.find(':');
  if (colon == std::string_view::npos || colon == 0 || colon > 40) return std::nullopt;
  std::string key;
  for (char c : line.substr(0, colon)) {
    const auto u = static_cast<unsigned char>(c);
    if (std::isalnum(u) || c == '_' || c == '-') {
      key.push_back(static_cast<char>(std::tolower(u)));
    } else if (c == ' ') {
      key.push_back('_');
    } else {
      return std::nullopt;
    }
  }
  key = trim(key);
  while (!key.empty() && key.back() == '_') key.pop_back();
  while (!key.empty() && key.front() == '_') key.erase(key.begin());
  if (key.empty() || !std::isalpha(static_cast<unsigned char>(key[0]))) return std::nullopt;
  return std::make_pair(key, trim(line.substr(colon + 1)));
}

}  // namespace

std::optional<std::string> StructuredReply::field(std::string_view key) const {
  auto it = fields.find(std::string(key));
  if (it == fields.end()) return std::nullopt;
  return it->second;
}

const std::vector<std::vector<std::string>>& StructuredReply::block_rows(std::string_view name) const {
  static const std::vector<std::vector<std::string>> kEmpty;
  auto it = rows.find(std::string(name));
  return it == rows.end() ? kEmpty : it->second;
}

StructuredReply parse_structured_reply(std::string_view text) {
  StructuredReply reply;
  std::string last_key;
  std::optional<std::string> open_block;
  std::string block_text;
  for (const std::string& raw_line : split(text, '\n')) {
    std::string line = raw_line;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    const std::string stripped = trim(line);
    if (stripped.starts_with("```")) {
      if (open_block) {
        reply.blocks.emplace(*open_block, block_text);
        reply.rows.try_emplace(*open_block);
        open_block.reset();
        block_text.clear();
      } else {
        open_block = to_lower(trim(std::string_view(stripped).substr(3)));
        last_key.clear();
      }
      continue;
    }
    if (open_block) {
      block_text += line;
      block_text += '\n';
      if (stripped.empty() || stripped.starts_with("#")) continue;
      std::vector<std::string> cells;
      for (const auto& cell : split(stripped, '|')) cells.push_back(trim(cell));
      reply.rows[*open_block].push_back(std::move(cells));
      continue;
    }
    if (stripped.empty()) continue;
    if (auto kv = split_key(stripped)) {
      last_key = kv->first;
      reply.fields[last_key] = kv->second;
    } else if (!last_key.empty()) {
      auto& value = reply.fields[last_key];
      if (!value.empty()) value += '\n';
      value += stripped;
    }
  }
  if (open_block) {
    // Unterminated fence: keep what was read.
    reply.blocks.emplace(*open_block, block_text);
    reply.rows.try_emplace(*open_block);
  }
  return reply;
}

std::string extract_fenced(std::string_view text, std::string_view info) {
  const std::string opener = "```" + std::string(info);
  auto start = text.find(opener);
  if (start == std::string_view::npos) return std::string(text);
  start = text.find('\n', start);
  if (start == std::string_view::npos) return {};
  ++start;
  auto end = text.find("```", start);
  if (end == std::string_view::npos) end = text.size();
  return std::string(text.substr(start, end - start));
}

}  // namespace figforge

namespace figforge {

std::string repair_prompt(const std::string& original_prompt, const std::string& bad_reply,
                          const std::string& problem) {
  return original_prompt + "\n\n--- previous reply ---\n" + bad_reply + "\n--- problem ---\n" + problem +
         "\nReply again, following the required format exactly.\n";
}

}  // namespace figforge
