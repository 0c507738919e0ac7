#include "figforge/ingest.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <set>

#include "figforge/error.hpp"
#include "figforge/reply_format.hpp"
#include "figforge/util.hpp"

namespace figforge {

using json = nlohmann::json;
namespace fs = std::filesystem;

std::string_view to_string(Category c) {
  switch (c) {
    case Category::Paper: return "Paper";
    case Category::Survey: return "Survey";
    case Category::Blog: return "Blog";
    case Category::Textbook: return "Textbook";
  }
  return "Paper";
}

Category category_from_label(std::string_view label) {
  std::string s = to_lower(trim(label));
  if (s.starts_with("category:")) s = trim(std::string_view(s).substr(9));
  auto strip = [](char c) { return c == '.' || c == '"' || c == '\'' || c == '*' || c == '`' || c == '!'; };
  while (!s.empty() && strip(s.back())) s.pop_back();
  while (!s.empty() && strip(s.front())) s.erase(s.begin());
  s = trim(s);
  for (Category c : {Category::Paper, Category::Survey, Category::Blog, Category::Textbook}) {
    if (s == to_lower(to_string(c))) return c;
  }
  throw ParseError("'" + trim(label) + "' is not one of Paper, Survey, Blog, Textbook");
}

std::string_view to_string(DocFormat f) {
  switch (f) {
    case DocFormat::Tex: return "tex";
    case DocFormat::Md: return "md";
    case DocFormat::Txt: return "txt";
  }
  return "txt";
}

DocFormat format_from_path(const fs::path& path) {
  const std::string ext = to_lower(path.extension().string());
  if (ext == ".tex") return DocFormat::Tex;
  if (ext == ".md" || ext == ".markdown") return DocFormat::Md;
  if (ext == ".txt" || ext.empty()) return DocFormat::Txt;
  if (ext == ".pdf") {
    throw ValidationError("PDF input is not supported; convert it to .txt, .md or .tex first (e.g. `pdftotext " +
                          path.string() + "`)");
  }
  throw ValidationError("unsupported input extension '" + ext + "' (expected .tex, .md or .txt)");
}

std::size_t count_tokens(std::string_view text) { return split_whitespace(text).size(); }

namespace {

const std::set<std::string, std::less<>> kDroppedCommands = {"cite", "ref", "label", "includegraphics"};
const std::set<std::string, std::less<>> kMathEnvironments = {
    "equation", "equation*", "align", "align*", "gather", "gather*", "multline", "multline*",
    "math",     "displaymath", "eqnarray", "eqnarray*", "flalign", "flalign*"};

std::string remove_tex_comments(std::string_view text) {
  std::string out;
  for (const std::string& line : split(text, '\n')) {
    std::size_t cut = std::string::npos;
    for (std::size_t i = 0; i < line.size(); ++i) {
      if (line[i] == '%' && (i == 0 || line[i - 1] != '\\')) {
        cut = i;
        break;
      }
    }
    if (cut == std::string::npos) {
      out += line;
      out += '\n';
    } else if (!trim(std::string_view(line).substr(0, cut)).empty()) {
      out += line.substr(0, cut);
      out += '\n';
    }
    // A comment-only line disappears entirely.
  }
  return out;
}

// Index just past the group that opens at `open` (which holds `lhs`).
std::size_t skip_group(std::string_view s, std::size_t open, char lhs, char rhs) {
  int depth = 0;
  for (std::size_t i = open; i < s.size(); ++i) {
    if (s[i] == '\\' && i + 1 < s.size()) {
      ++i;
      continue;
    }
    if (s[i] == lhs) ++depth;
    if (s[i] == rhs && --depth == 0) return i + 1;
  }
  return s.size();
}

std::string strip_tex_body(std::string_view s);

std::size_t find_closing(std::string_view s, std::size_t from, std::string_view closer) {
  const auto pos = s.find(closer, from);
  return pos == std::string_view::npos ? s.size() : pos;
}

std::string strip_tex_body(std::string_view s) {
  std::string out;
  std::size_t i = 0;
  while (i < s.size()) {
    const char c = s[i];
    if (c == '$') {
      const bool display = i + 1 < s.size() && s[i + 1] == '$';
      const std::string_view closer = display ? "$$" : "$";
      std::size_t end = i + closer.size();
      while (true) {
        end = find_closing(s, end, closer);
        if (end < s.size() && end > 0 && s[end - 1] == '\\') {
          ++end;
          continue;
        }
        break;
      }
      out += " [MATH] ";
      i = std::min(s.size(), end + closer.size());
      continue;
    }
    if (c == '\\' && i + 1 < s.size()) {
      const char n = s[i + 1];
      if (n == '[' || n == '(') {
        const std::string_view closer = n == '[' ? "\\]" : "\\)";
        const std::size_t end = find_closing(s, i + 2, closer);
        out += " [MATH] ";
        i = std::min(s.size(), end + 2);
        continue;
      }
      if (n == '\\') {
        out += '\n';
        i += 2;
        continue;
      }
      if (std::string_view("%&_#${} ,;").find(n) != std::string_view::npos) {
        out += (n == ',' || n == ';') ? ' ' : n;
        i += 2;
        continue;
      }
      if (!std::isalpha(static_cast<unsigned char>(n))) {
        i += 2;
        continue;
      }
      std::size_t j = i + 1;
      while (j < s.size() && std::isalpha(static_cast<unsigned char>(s[j]))) ++j;
      if (j < s.size() && s[j] == '*') ++j;
      const std::string name(s.substr(i + 1, j - i - 1));
      std::string base = name;
      if (!base.empty() && base.back() == '*') base.pop_back();

      if (base == "begin" || base == "end") {
        std::string env;
        if (j < s.size() && s[j] == '{') {
          const std::size_t close = skip_group(s, j, '{', '}');
          env = std::string(s.substr(j + 1, close - j - 2));
          j = close;
        }
        if (base == "begin" && kMathEnvironments.contains(env)) {
          const std::string closer = "\\end{" + env + "}";
          const std::size_t end = find_closing(s, j, closer);
          out += " [MATH] ";
          i = std::min(s.size(), end + closer.size());
          continue;
        }
        while (j < s.size() && s[j] == '[') j = skip_group(s, j, '[', ']');
        out += '\n';
        i = j;
        continue;
      }

      // Optional arguments are never prose.
      while (j < s.size() && s[j] == '[') j = skip_group(s, j, '[', ']');
      if (kDroppedCommands.contains(base) || base.starts_with("cite")) {
        if (j < s.size() && s[j] == '{') j = skip_group(s, j, '{', '}');
        i = j;
        continue;
      }
      // Unwrap: keep the text of the last adjacent braced argument.
      std::string_view last_arg;
      bool has_arg = false;
      while (j < s.size() && s[j] == '{') {
        const std::size_t close = skip_group(s, j, '{', '}');
        last_arg = s.substr(j + 1, close >= j + 2 ? close - j - 2 : 0);
        has_arg = true;
        j = close;
      }
      if (has_arg) out += strip_tex_body(last_arg);
      i = j;
      continue;
    }
    if (c == '{' || c == '}') {
      ++i;
      continue;
    }
    out += c == '~' ? ' ' : c;
    ++i;
  }
  return out;
}

std::string tidy_lines(std::string_view text) {
  std::string out;
  bool blank_pending = false;
  for (const std::string& line : split(text, '\n')) {
    std::string tidy = normalize_whitespace(line);
    if (tidy.empty()) {
      blank_pending = !out.empty();
      continue;
    }
    if (!out.empty()) out += blank_pending ? "\n\n" : "\n";
    blank_pending = false;
    out += tidy;
  }
  return out;
}

}  // namespace

std::string strip_tex(std::string_view tex) {
  std::string_view body = tex;
  if (const auto begin = body.find("\\begin{document}"); begin != std::string_view::npos) {
    body = body.substr(begin + std::string_view("\\begin{document}").size());
  }
  if (const auto end = body.find("\\end{document}"); end != std::string_view::npos) body = body.substr(0, end);
  return tidy_lines(strip_tex_body(remove_tex_comments(body)));
}

std::string strip_front_matter(std::string_view markdown) {
  std::string_view s = markdown;
  if (s.starts_with("\xEF\xBB\xBF")) s.remove_prefix(3);
  if (!(s.starts_with("---\n") || s.starts_with("---\r\n"))) return std::string(s);
  std::size_t pos = s.find('\n') + 1;
  while (pos < s.size()) {
    std::size_t eol = s.find('\n', pos);
    if (eol == std::string_view::npos) eol = s.size();
    const std::string line = trim(s.substr(pos, eol - pos));
    if (line == "---" || line == "...") return std::string(s.substr(std::min(s.size(), eol + 1)));
    pos = eol + 1;
  }
  // Unterminated front matter: treat the file as plain markdown.
  return std::string(s);
}

SourceDocument load_document(const fs::path& path, DocFormat format) {
  std::error_code ec;
  if (!fs::is_regular_file(path, ec)) throw FileNotFound("input file not found: " + path.string());
  const std::string bytes = read_file(path);
  if (!is_valid_utf8(bytes)) throw DecodeError(path.string() + " is not valid UTF-8");
  std::string text;
  switch (format) {
    case DocFormat::Tex: text = strip_tex(bytes); break;
    case DocFormat::Md: text = trim(strip_front_matter(bytes)); break;
    case DocFormat::Txt:
      text = bytes.starts_with("\xEF\xBB\xBF") ? bytes.substr(3) : bytes;
      text = trim(text);
      break;
  }
  if (trim(text).empty()) throw EmptyDocument(path.string() + " contains no text after stripping markup");
  SourceDocument doc;
  doc.id = sha256_hex(bytes).substr(0, 16);
  doc.category = Category::Paper;
  doc.token_count = count_tokens(text);
  doc.raw_text = std::move(text);
  doc.source_path = path;
  doc.format = format;
  return doc;
}

Category classify_category(const SourceDocument& doc, Gateway& text_model) {
  std::string prompt =
      "### task: classify_category\n"
      "You are given a long-form scientific document. Decide which kind of source it is.\n"
      "Answer with exactly one word from: Paper, Survey, Blog, Textbook.\n"
      "- Paper: a research article proposing a method or result.\n"
      "- Survey: an overview organising a body of prior work.\n"
      "- Blog: an informal technical post or tutorial.\n"
      "- Textbook: pedagogical material explaining established concepts.\n"
      "\n--- document ---\n" +
      doc.raw_text + "\n";
  return category_from_label(complete_text(text_model, std::move(prompt)));
}

void validate_method(const MethodSummary& method) {
  if (trim(method.summary_text).empty()) throw SchemaError("summary is empty");
  std::set<std::string> ids;
  for (const Entity& e : method.entities) {
    if (e.id.empty()) throw SchemaError("entity with empty id");
    if (!ids.insert(e.id).second) throw SchemaError("duplicate entity id '" + e.id + "'");
  }
  for (const Relation& r : method.relations) {
    if (!ids.contains(r.source_id)) throw SchemaError("relation source '" + r.source_id + "' is not a declared entity");
    if (!ids.contains(r.target_id)) throw SchemaError("relation target '" + r.target_id + "' is not a declared entity");
  }
}

MethodSummary parse_method_reply(const std::string& reply) {
  const StructuredReply parsed = parse_structured_reply(reply);
  MethodSummary method;
  method.summary_text = parsed.field("summary").value_or("");
  for (const auto& row : parsed.block_rows("entities")) {
    if (row.size() < 2) throw SchemaError("entity rows need at least `id | label`");
    method.entities.push_back({row[0], row[1], row.size() > 2 ? row[2] : ""});
  }
  for (const auto& row : parsed.block_rows("relations")) {
    if (row.size() < 2) throw SchemaError("relation rows need at least `source | target`");
    method.relations.push_back({row[0], row[1], row.size() > 2 ? row[2] : ""});
  }
  method.raw_reply = reply;
  validate_method(method);
  return method;
}

std::string extract_method_prompt(const SourceDocument& doc) {
  return "### task: extract_method\n"
         "Read the document and distill its core methodology into something that can be drawn as a\n"
         "schematic. Give a concise methodology summary, then the entities (stages, modules, data,\n"
         "actors) that should appear as boxes and the directed relations between them.\n"
         "Use short labels (at most four words). Every relation must reference declared entity ids.\n"
         "Document category: " +
         std::string(to_string(doc.category)) +
         "\n"
         "Reply format:\n"
         "summary: <methodology summary>\n"
         "```entities\n"
         "<id> | <label> | <kind>\n"
         "```\n"
         "```relations\n"
         "<source id> | <target id> | <label>\n"
         "```\n"
         "\n--- document ---\n" +
         doc.raw_text + "\n";
}

MethodSummary extract_method(const SourceDocument& doc, Gateway& text_model) {
  const std::function<std::string(const std::string&)> ask = [&](const std::string& p) {
    return complete_text(text_model, p);
  };
  const std::function<MethodSummary(const std::string&)> parse = parse_method_reply;
  return ask_with_repair(ask, extract_method_prompt(doc), parse);
}

json method_to_json(const MethodSummary& method) {
  json j = json::object();
  j["summary_text"] = method.summary_text;
  j["entities"] = json::array();
  for (const Entity& e : method.entities) j["entities"].push_back({{"id", e.id}, {"label", e.label}, {"kind", e.kind}});
  j["relations"] = json::array();
  for (const Relation& r : method.relations) {
    j["relations"].push_back({{"source_id", r.source_id}, {"target_id", r.target_id}, {"label", r.label}});
  }
  j["raw_reply"] = method.raw_reply;
  return j;
}

MethodSummary method_from_json(const json& j) {
  MethodSummary m;
  try {
    m.summary_text = j.at("summary_text").get<std::string>();
    for (const json& e : j.at("entities")) {
      m.entities.push_back({e.at("id").get<std::string>(), e.at("label").get<std::string>(), e.value("kind", "")});
    }
    for (const json& r : j.at("relations")) {
      m.relations.push_back(
          {r.at("source_id").get<std::string>(), r.at("target_id").get<std::string>(), r.value("label", "")});
    }
    m.raw_reply = j.value("raw_reply", "");
  } catch (const json::exception& e) {
    throw SchemaError(std::string("malformed method.json: ") + e.what());
  }
  validate_method(m);
  return m;
}

}  // namespace figforge
