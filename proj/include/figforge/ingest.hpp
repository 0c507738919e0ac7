#pragma once

#include <cstddef>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "figforge/gateway.hpp"

namespace figforge {

enum class Category { Paper, Survey, Blog, Textbook };
std::string_view to_string(Category c);
// Trims, case-folds and drops trailing punctuation before matching one of the
// four labels. Throws ParseError otherwise.
Category category_from_label(std::string_view label);

enum class DocFormat { Tex, Md, Txt };
std::string_view to_string(DocFormat f);
// Maps a file extension to a format. PDF is rejected with a hint.
DocFormat format_from_path(const std::filesystem::path& path);

struct SourceDocument {
  std::string id;  // digest prefix of the source bytes
  Category category = Category::Paper;
  std::string raw_text;
  std::size_t token_count = 0;
  std::filesystem::path source_path;
  DocFormat format = DocFormat::Txt;

  friend bool operator==(const SourceDocument&, const SourceDocument&) = default;
};

// Whitespace-delimited token count.
std::size_t count_tokens(std::string_view text);

// Markup strippers, applied by load_document.
std::string strip_tex(std::string_view tex);
std::string strip_front_matter(std::string_view markdown);

// Errors: FileNotFound, DecodeError (not UTF-8), EmptyDocument.
SourceDocument load_document(const std::filesystem::path& path, DocFormat format);

// Returns the model's label; the document itself is left untouched.
Category classify_category(const SourceDocument& doc, Gateway& text_model);

struct Entity {
  std::string id;
  std::string label;
  std::string kind;
  friend bool operator==(const Entity&, const Entity&) = default;
};

struct Relation {
  std::string source_id;
  std::string target_id;
  std::string label;
  friend bool operator==(const Relation&, const Relation&) = default;
};

struct MethodSummary {
  std::string summary_text;
  std::vector<Entity> entities;
  std::vector<Relation> relations;
  std::string raw_reply;  // audit copy of the reply that produced this value

  friend bool operator==(const MethodSummary&, const MethodSummary&) = default;
};

// Throws SchemaError describing the first violated invariant.
void validate_method(const MethodSummary& method);
MethodSummary parse_method_reply(const std::string& reply);
std::string extract_method_prompt(const SourceDocument& doc);
MethodSummary extract_method(const SourceDocument& doc, Gateway& text_model);

// method.json: {summary_text, entities[], relations[], raw_reply}
nlohmann::json method_to_json(const MethodSummary& method);
MethodSummary method_from_json(const nlohmann::json& j);

}  // namespace figforge
