#pragma once

#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace figforge {

// Model replies use a line-oriented format:
//
//   key: value
//   ```name
//   cell | cell | cell
//   ```
//
// Keys are case-folded with spaces mapped to '_'. A line that does not look
// like `key:` continues the previous value. Fenced blocks keep both their raw
// text and their '|'-separated rows.
struct StructuredReply {
  std::map<std::string, std::string> fields;
  std::map<std::string, std::string> blocks;
  std::map<std::string, std::vector<std::vector<std::string>>> rows;

  std::optional<std::string> field(std::string_view key) const;
  bool has_block(std::string_view name) const { return blocks.contains(std::string(name)); }
  const std::vector<std::vector<std::string>>& block_rows(std::string_view name) const;
};

StructuredReply parse_structured_reply(std::string_view text);

// Returns the first fenced block of the given info string, or, when none is
// present, the reply text itself. Used for markup replies.
std::string extract_fenced(std::string_view text, std::string_view info);

}  // namespace figforge

#include <functional>

#include "figforge/error.hpp"

namespace figforge {

std::string repair_prompt(const std::string& original_prompt, const std::string& bad_reply,
                          const std::string& problem);

struct RepairOutcome {
  int attempts = 0;  // 1 when the first reply parsed, 2 after a repair
  std::string raw_reply;
};

// Sends `prompt`, parses the reply with `parse` (which throws SchemaError on
// a bad reply) and, on failure, sends exactly one repair prompt. A second
// failure propagates the SchemaError.
template <typename T>
T ask_with_repair(const std::function<std::string(const std::string&)>& ask, const std::string& prompt,
                  const std::function<T(const std::string&)>& parse, RepairOutcome* outcome = nullptr) {
  std::string reply = ask(prompt);
  try {
    T value = parse(reply);
    if (outcome) *outcome = {1, reply};
    return value;
  } catch (const SchemaError& first) {
    std::string second_reply = ask(repair_prompt(prompt, reply, first.what()));
    T value = parse(second_reply);
    if (outcome) *outcome = {2, second_reply};
    return value;
  }
}

}  // namespace figforge
