#pragma once

#include <string>
#include <string_view>

#include "figforge/gateway.hpp"

// Deterministic offline stand-ins for the model slots. Each reads the
// "### task: <name>" header of the prompt and answers in the reply format
// that task asks for. They exist so the whole pipeline runs without network
// access; their judgement is crude by design.
namespace figforge::mock {

// Value of the `### task:` header, or "" when absent.
std::string task_of(std::string_view prompt);
// Body of a `--- name ---` section of a prompt ("" when absent).
std::string prompt_section(std::string_view prompt, std::string_view name);

// classify_category, extract_method, design_layout, build_t2i_prompt.
class HeuristicText : public Backend {
 public:
  BackendReply invoke(const BackendRequest& request) override;
};

// critique_layout, referenced_score, pairwise_compare, adjudicate_text,
// measure_figure.
class HeuristicVision : public Backend {
 public:
  BackendReply invoke(const BackendRequest& request) override;
};

// Exact inverse of the embedded font renderer: finds black and white text.
// With `drop_first_char_every = k > 0`, every k-th item (0, k, 2k, ...) loses
// its first character and reports confidence 0.9, imitating a misread.
class GlyphOcr : public Backend {
 public:
  explicit GlyphOcr(int drop_first_char_every = 0) : drop_every_(drop_first_char_every) {}
  BackendReply invoke(const BackendRequest& request) override;

 private:
  int drop_every_;
};

struct MockSetup {
  int ocr_drop_first_char_every = 0;
};

// Registers the five heuristic backends on `gateway`.
void register_heuristic_mocks(Gateway& gateway, const MockSetup& setup = {});

}  // namespace figforge::mock
