#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>

#include "figforge/error.hpp"
#include "figforge/ingest.hpp"
#include "figforge/mock_backends.hpp"
#include "figforge/mock_models.hpp"
#include "support/scripted.hpp"

using namespace figforge;
using figforge::test_support::quiet_gateway;
namespace fs = std::filesystem;

namespace {

fs::path write_temp(const std::string& name, const std::string& content) {
  const auto dir = fs::temp_directory_path() / "figforge_ingest";
  fs::create_directories(dir);
  const auto p = dir / name;
  std::ofstream(p, std::ios::binary) << content;
  return p;
}

std::unique_ptr<Gateway> scripted_text(std::vector<std::string> replies,
                                       std::shared_ptr<mock::ScriptedBackend>* out = nullptr) {
  auto gw = quiet_gateway();
  auto backend = std::make_shared<mock::ScriptedBackend>(std::move(replies));
  gw->register_backend(Capability::Text, backend);
  if (out) *out = backend;
  return gw;
}

const char* kValidMethod =
    "summary: Data is encoded then decoded.\n"
    "```entities\n"
    "e0 | Input | data\n"
    "e1 | Encoder | module\n"
    "e2 | Decoder | module\n"
    "```\n"
    "```relations\n"
    "e0 | e1 | feeds\n"
    "e1 | e2 |\n"
    "```\n";

}  // namespace

// --- load_document ---------------------------------------------------------

TEST(Load, PlainTextCountsTokens) {
  const auto doc = load_document(write_temp("a.txt", "hello world"), DocFormat::Txt);
  EXPECT_EQ(doc.token_count, 2u);
  EXPECT_EQ(doc.raw_text, "hello world");
  EXPECT_EQ(doc.category, Category::Paper);
  EXPECT_EQ(doc.format, DocFormat::Txt);
  EXPECT_FALSE(doc.id.empty());
}

TEST(Load, TexMarkupIsStripped) {
  const auto doc = load_document(write_temp("b.tex", "\\section{X} body"), DocFormat::Tex);
  EXPECT_NE(doc.raw_text.find('X'), std::string::npos);
  EXPECT_NE(doc.raw_text.find("body"), std::string::npos);
  EXPECT_EQ(doc.raw_text.find('\\'), std::string::npos);
}

TEST(Load, TexStripRules) {
  const std::string tex =
      "% a comment line\n"
      "We use \\emph{attention} \\cite{vaswani} as in Fig.~\\ref{fig:a}.\\label{sec:x}\n"
      "\\includegraphics[width=3cm]{plot.png}\n"
      "The loss $L = x^2$ and\n"
      "\\begin{equation}E = mc^2\\end{equation}\n"
      "done.";
  const std::string s = strip_tex(tex);
  EXPECT_EQ(s.find("comment"), std::string::npos);
  EXPECT_NE(s.find("attention"), std::string::npos);
  EXPECT_EQ(s.find("vaswani"), std::string::npos);
  EXPECT_EQ(s.find("fig:a"), std::string::npos);
  EXPECT_EQ(s.find("sec:x"), std::string::npos);
  EXPECT_EQ(s.find("plot.png"), std::string::npos);
  EXPECT_EQ(s.find("mc^2"), std::string::npos);
  EXPECT_EQ(s.find("x^2"), std::string::npos);
  EXPECT_NE(s.find("[MATH]"), std::string::npos);
  EXPECT_NE(s.find("done."), std::string::npos);
}

TEST(Load, MarkdownFrontMatterIsDropped) {
  const auto doc = load_document(write_temp("c.md", "---\ntitle: T\n---\n# Heading\nText here."), DocFormat::Md);
  EXPECT_EQ(doc.raw_text.find("title:"), std::string::npos);
  EXPECT_NE(doc.raw_text.find("Text here."), std::string::npos);
}

TEST(Load, Errors) {
  EXPECT_THROW(load_document(write_temp("empty.md", ""), DocFormat::Md), EmptyDocument);
  EXPECT_THROW(load_document(write_temp("only_fm.md", "---\na: b\n---\n  \n"), DocFormat::Md), EmptyDocument);
  EXPECT_THROW(load_document("/nonexistent/figforge/x.txt", DocFormat::Txt), FileNotFound);
  EXPECT_THROW(load_document(write_temp("bad.txt", "ok \xff\xfe"), DocFormat::Txt), DecodeError);
  EXPECT_THROW(format_from_path("paper.pdf"), ValidationError);
  EXPECT_EQ(format_from_path("x.TEX"), DocFormat::Tex);
}

TEST(Load, DeterministicForSameBytes) {
  const auto a = load_document(write_temp("d1.txt", "same bytes here"), DocFormat::Txt);
  const auto b = load_document(write_temp("d1.txt", "same bytes here"), DocFormat::Txt);
  EXPECT_EQ(a, b);
  EXPECT_EQ(a.token_count, count_tokens(a.raw_text));
}

// --- classify_category -----------------------------------------------------

TEST(Classify, ModelLabelsAreNormalized) {
  SourceDocument doc;
  doc.raw_text = "x";
  EXPECT_EQ(classify_category(doc, *scripted_text({"Textbook"})), Category::Textbook);
  EXPECT_EQ(classify_category(doc, *scripted_text({" blog\n"})), Category::Blog);
  EXPECT_EQ(classify_category(doc, *scripted_text({"Survey."})), Category::Survey);
  EXPECT_THROW(classify_category(doc, *scripted_text({"poster"})), ParseError);
}

TEST(Classify, LabelsRoundTrip) {
  for (auto c : {Category::Paper, Category::Survey, Category::Blog, Category::Textbook}) {
    EXPECT_EQ(category_from_label(to_string(c)), c);
  }
}

TEST(Classify, HeuristicModelReadsGenreCues) {
  auto gw = quiet_gateway();
  gw->register_backend(Capability::Text, std::make_shared<mock::HeuristicText>());
  SourceDocument doc;
  doc.raw_text = "In this post you will learn, and let's build it together. In this tutorial you type.";
  EXPECT_EQ(classify_category(doc, *gw), Category::Blog);
  doc.raw_text = "We propose a method. Experiments against each baseline and an ablation.";
  EXPECT_EQ(classify_category(doc, *gw), Category::Paper);
}

// --- extract_method --------------------------------------------------------

TEST(Extract, ValidReplyPassesThrough) {
  SourceDocument doc;
  doc.raw_text = "x";
  const auto m = extract_method(doc, *scripted_text({kValidMethod}));
  EXPECT_EQ(m.entities.size(), 3u);
  EXPECT_EQ(m.relations.size(), 2u);
  EXPECT_EQ(m.relations[0].label, "feeds");
  EXPECT_EQ(m.raw_reply, kValidMethod);
}

TEST(Extract, DanglingRelationFailsAfterOneRepair) {
  SourceDocument doc;
  doc.raw_text = "x";
  const std::string bad = "summary: s\n```entities\ne0 | A | k\n```\n```relations\ne0 | e9 | x\n```\n";
  std::shared_ptr<mock::ScriptedBackend> backend;
  auto gw = scripted_text({bad}, &backend);
  EXPECT_THROW(extract_method(doc, *gw), SchemaError);
  EXPECT_EQ(backend->invocations(), 2);
  EXPECT_NE(backend->prompts()[1].find("--- previous reply ---"), std::string::npos);
}

TEST(Extract, RepairPromptFixesTheReply) {
  SourceDocument doc;
  doc.raw_text = "x";
  const auto m = extract_method(doc, *scripted_text({"no structure at all", kValidMethod}));
  EXPECT_EQ(m.entities.size(), 3u);
}

TEST(Extract, EmptyEntityListIsLegal) {
  SourceDocument doc;
  doc.raw_text = "x";
  const auto m = extract_method(doc, *scripted_text({"summary: nothing to draw\n```entities\n```\n"}));
  EXPECT_TRUE(m.entities.empty());
  EXPECT_TRUE(m.relations.empty());
}

TEST(Extract, ValidationRules) {
  MethodSummary m;
  m.summary_text = "s";
  m.entities = {{"a", "A", ""}, {"a", "B", ""}};
  EXPECT_THROW(validate_method(m), SchemaError);
  m.entities = {{"a", "A", ""}};
  m.summary_text = " ";
  EXPECT_THROW(validate_method(m), SchemaError);
}

TEST(Extract, JsonRoundTrip) {
  auto m = parse_method_reply(kValidMethod);
  m.raw_reply = kValidMethod;
  EXPECT_EQ(method_from_json(nlohmann::json::parse(method_to_json(m).dump())), m);
}

TEST(Extract, HeuristicModelNeverDangles) {
  auto gw = quiet_gateway();
  gw->register_backend(Capability::Text, std::make_shared<mock::HeuristicText>());
  for (const char* text : {"The Encoder feeds the Decoder. The Decoder writes Output for the Critic.",
                           "plain lowercase text with no names", "PPO PPO PPO updates the Policy via Rollout."}) {
    SourceDocument doc;
    doc.raw_text = text;
    const auto m = extract_method(doc, *gw);
    EXPECT_NO_THROW(validate_method(m));
    EXPECT_GE(m.entities.size(), 2u);
  }
}
