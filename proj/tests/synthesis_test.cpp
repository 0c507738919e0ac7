#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <map>
#include <random>

#include "figforge/error.hpp"
#include "figforge/glyphs.hpp"
#include "figforge/mock_backends.hpp"
#include "figforge/mock_models.hpp"
#include "figforge/synthesis.hpp"
#include "figforge/util.hpp"
#include "support/scripted.hpp"

using namespace figforge;
using figforge::test_support::quiet_gateway;
using figforge::test_support::three_node_layout;

namespace {

std::shared_ptr<mock::FunctionBackend> forbidden() {
  return std::make_shared<mock::FunctionBackend>(
      [](const BackendRequest&) -> BackendReply { throw PermanentFailure("must not be called"); });
}

std::filesystem::path fresh_dir(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / ("figforge_synth_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

std::vector<PixelBox> diff_boxes(const Image& a, const Image& b) {
  std::vector<PixelBox> out;
  for (int y = 0; y < a.height(); ++y) {
    for (int x = 0; x < a.width(); ++x) {
      if (!(a.at(x, y) == b.at(x, y))) out.push_back({x, y, 1, 1});
    }
  }
  return out;
}

bool inside_any(const PixelBox& p, const std::vector<PixelBox>& boxes) {
  for (const auto& b : boxes) {
    if (p.x >= b.x && p.y >= b.y && p.x < b.right() && p.y < b.bottom()) return true;
  }
  return false;
}

}  // namespace

// --- verify_text -----------------------------------------------------------

TEST(Verify, MisspellingIsMatchedToItsLabel) {
  auto gw = quiet_gateway();
  gw->register_backend(Capability::Vision, forbidden());
  const LabelMultiset gt{"gravity", "Encoder"};
  const auto lib = verify_text({{"ravity", {0, 0, 60, 14}, 0.9}}, gt, *gw);
  ASSERT_EQ(lib.items.size(), 1u);
  EXPECT_EQ(lib.items[0].status, TextStatus::Matched);
  EXPECT_EQ(lib.items[0].corrected_text, "gravity");
  EXPECT_EQ(lib.items[0].ocr_text, "ravity");
  EXPECT_EQ(lib.items[0].id, "t0");
}

TEST(Verify, ExactStringMatchesItself) {
  auto gw = quiet_gateway();
  gw->register_backend(Capability::Vision, forbidden());
  const auto lib = verify_text({{"Encoder", {0, 0, 60, 14}, 0.99}}, {"Encoder"}, *gw);
  EXPECT_EQ(lib.items[0].status, TextStatus::Matched);
  EXPECT_EQ(lib.items[0].corrected_text, "Encoder");
}

TEST(Verify, LowConfidenceNonsenseIsDropped) {
  auto gw = quiet_gateway();
  gw->register_backend(Capability::Vision, forbidden());
  const LabelMultiset gt{"Encoder", "Decoder"};
  auto lib = verify_text({{"qwzx", {0, 0, 40, 14}, 0.2}}, gt, *gw);
  EXPECT_EQ(lib.items[0].status, TextStatus::Dropped);
  lib = verify_text({{"qwzx", {0, 0, 40, 14}, 0.5}}, gt, *gw);
  EXPECT_EQ(lib.items[0].status, TextStatus::Kept);
  EXPECT_EQ(lib.items[0].corrected_text, "qwzx");
}

TEST(Verify, MatchThresholdIsInclusive) {
  auto gw = quiet_gateway();
  gw->register_backend(Capability::Vision, forbidden());
  // One edit in three characters is 0.333, inside the 0.34 bound; two edits
  // in five is 0.4, outside it.
  EXPECT_EQ(verify_text({{"cot", {0, 0, 8, 14}, 0.9}}, {"cat"}, *gw).items[0].status, TextStatus::Matched);
  EXPECT_EQ(verify_text({{"cloud", {0, 0, 8, 14}, 0.9}}, {"clown"}, *gw).items[0].status, TextStatus::Kept);
}

TEST(Verify, LabelMultiplicityIsConsumed) {
  auto gw = quiet_gateway();
  gw->register_backend(Capability::Vision, forbidden());
  const LabelMultiset gt{"Block"};
  const auto lib = verify_text({{"Block", {0, 0, 8, 14}, 0.9}, {"Blok", {0, 20, 8, 14}, 0.9}}, gt, *gw);
  EXPECT_EQ(lib.items[0].status, TextStatus::Matched);
  EXPECT_EQ(lib.items[1].status, TextStatus::Kept);
}

TEST(Verify, GreedyPrefersTheCloserItem) {
  auto gw = quiet_gateway();
  gw->register_backend(Capability::Vision, forbidden());
  // The second item is an exact read, so it wins the single label even
  // though the first item comes earlier.
  const auto lib = verify_text({{"Encodr", {0, 0, 8, 14}, 0.9}, {"Encoder", {0, 20, 8, 14}, 0.9}}, {"Encoder"}, *gw);
  EXPECT_EQ(lib.items[0].status, TextStatus::Kept);
  EXPECT_EQ(lib.items[1].status, TextStatus::Matched);
}

TEST(Verify, EqualDistanceTieGoesToTheAdjudicator) {
  auto gw = quiet_gateway();
  auto judge = std::make_shared<mock::ScriptedBackend>(std::vector<std::string>{"choice: car\n"});
  gw->register_backend(Capability::Vision, judge);
  const auto lib = verify_text({{"cax", {0, 0, 24, 14}, 0.9}}, {"cat", "car"}, *gw);
  EXPECT_EQ(judge->invocations(), 1);
  EXPECT_EQ(lib.items[0].corrected_text, "car");
  EXPECT_NE(judge->prompts()[0].find("### task: adjudicate_text"), std::string::npos);
}

TEST(Verify, EmptyOcrStringIsDropped) {
  auto gw = quiet_gateway();
  gw->register_backend(Capability::Vision, forbidden());
  const auto lib = verify_text({{"   ", {0, 0, 8, 14}, 0.99}}, {"a"}, *gw);
  EXPECT_EQ(lib.items[0].status, TextStatus::Dropped);
}

TEST(Verify, RandomizedSoundness) {
  const std::vector<std::string> vocab = {"gravity", "Encoder", "Decoder", "Input", "Output", "Loss",
                                          "Attention", "PPO", "Reward", "Policy", "cat", "car"};
  std::mt19937 rng(7);
  auto gw = quiet_gateway();
  gw->register_backend(Capability::Vision, std::make_shared<mock::HeuristicVision>());
  for (int trial = 0; trial < 300; ++trial) {
    LabelMultiset gt;
    const int n_labels = std::uniform_int_distribution<int>(0, 6)(rng);
    for (int i = 0; i < n_labels; ++i) gt.insert(vocab[rng() % vocab.size()]);
    std::vector<OcrItem> items;
    const int n_items = std::uniform_int_distribution<int>(0, 8)(rng);
    for (int i = 0; i < n_items; ++i) {
      std::string s = vocab[rng() % vocab.size()];
      const int mutation = static_cast<int>(rng() % 4);
      if (mutation == 1 && s.size() > 1) s.erase(0, 1);
      if (mutation == 2) s[rng() % s.size()] = 'z';
      if (mutation == 3) s = "xq" + std::to_string(rng() % 100);
      items.push_back({s, {0, i * 20, 40, 14}, (rng() % 100) / 100.0});
    }
    const auto lib = verify_text(items, gt, *gw);
    ASSERT_EQ(lib.items.size(), items.size());
    std::map<std::string, int> used;
    for (const auto& t : lib.items) {
      if (t.status == TextStatus::Matched) {
        ASSERT_TRUE(gt.contains(t.corrected_text)) << t.corrected_text;
        ++used[t.corrected_text];
      } else {
        EXPECT_EQ(t.corrected_text, t.ocr_text);
      }
    }
    for (const auto& [label, n] : used) EXPECT_LE(static_cast<std::size_t>(n), gt.count(label));
  }
}

TEST(Verify, LibraryJsonRoundTrips) {
  TextLibrary lib;
  lib.items = {{"t0", "ravity", "gravity", {1, 2, 3, 4}, 0.9, TextStatus::Matched},
               {"t1", "qwzx", "qwzx", {5, 6, 7, 8}, 0.2, TextStatus::Dropped}};
  const auto j = corrected_library_json(lib, 100, 100);
  EXPECT_EQ(corrected_library_from_json(nlohmann::json::parse(j.dump())), lib);
  for (auto s : {TextStatus::Matched, TextStatus::Kept, TextStatus::Dropped}) {
    EXPECT_EQ(text_status_from_string(to_string(s)), s);
  }
}

// --- compose_final ---------------------------------------------------------

TEST(Compose, EmptyLibraryIsIdentity) {
  Image erased(64, 32, {200, 180, 160});
  const auto out = compose_final(erased, {});
  EXPECT_EQ(out.image, erased);
  EXPECT_TRUE(out.drawn_boxes.empty());
}

TEST(Compose, SingleItemChangesOnlyItsBoxAndReadsBack) {
  const Image erased(512, 512);
  TextLibrary lib;
  const PixelBox box{10, 10, 100, 20};
  lib.items = {{"t0", "Stage 1", "Stage 1", box, 0.95, TextStatus::Matched}};
  const auto out = compose_final(erased, lib);
  const auto diffs = diff_boxes(erased, out.image);
  ASSERT_FALSE(diffs.empty());
  for (const auto& p : diffs) ASSERT_TRUE(inside_any(p, {box}));

  auto gw = quiet_gateway();
  gw->register_backend(Capability::Ocr, std::make_shared<mock::GlyphOcr>());
  const auto items = ocr(*gw, out.image);
  ASSERT_EQ(items.size(), 1u);
  EXPECT_EQ(items[0].text, "Stage 1");
}

TEST(Compose, InkFollowsBackgroundLuminance) {
  Image erased(200, 40, kWhite);
  erased.fill_box({100, 0, 100, 40}, {20, 30, 40});
  TextLibrary lib;
  lib.items = {{"t0", "dark", "Light", {0, 5, 100, 30}, 1, TextStatus::Kept},
               {"t1", "light", "Dark", {100, 5, 100, 30}, 1, TextStatus::Kept}};
  const auto out = compose_final(erased, lib);
  const auto black = glyphs::decode(out.image, kBlack);
  const auto white = glyphs::decode(out.image, kWhite);
  ASSERT_EQ(black.size(), 1u);
  ASSERT_EQ(white.size(), 1u);
  EXPECT_EQ(black[0].text, "Light");
  EXPECT_EQ(white[0].text, "Dark");
}

TEST(Compose, DroppedItemsAreNotDrawn) {
  const Image erased(100, 40);
  TextLibrary lib;
  lib.items = {{"t0", "qwzx", "qwzx", {0, 0, 100, 40}, 0.1, TextStatus::Dropped}};
  EXPECT_EQ(compose_final(erased, lib).image, erased);
}

TEST(Compose, OverlapIsDrawnInOrderAndWarned) {
  const Image erased(200, 60);
  TextLibrary lib;
  lib.items = {{"t0", "B", "Bee", {20, 20, 100, 20}, 1, TextStatus::Kept},
               {"t1", "A", "Ant", {0, 0, 100, 30}, 1, TextStatus::Kept}};
  const auto out = compose_final(erased, lib);
  EXPECT_FALSE(out.warnings.empty());
  ASSERT_EQ(out.drawn_boxes.size(), 2u);
  EXPECT_EQ(out.drawn_boxes[0].y, 0);  // (y, x) order
}

TEST(Compose, OverlayIsParseableMarkup) {
  const Image erased(300, 100);
  TextLibrary lib;
  lib.items = {{"t0", "Encoder & co", "Encoder & co", {10, 10, 120, 20}, 1, TextStatus::Matched}};
  const auto out = compose_final(erased, lib);
  const auto parsed = parse_svg_document(out.overlay_svg);
  ASSERT_EQ(parsed.graph.nodes.size(), 1u);
  EXPECT_EQ(parsed.graph.nodes[0].label, "Encoder & co");
}

TEST(Compose, RandomizedLocality) {
  std::mt19937 rng(11);
  for (int trial = 0; trial < 100; ++trial) {
    const int w = 80 + static_cast<int>(rng() % 200);
    const int h = 60 + static_cast<int>(rng() % 150);
    Image erased(w, h);
    for (int k = 0; k < 5; ++k) {
      const Rgb c{static_cast<std::uint8_t>(rng()), static_cast<std::uint8_t>(rng()), static_cast<std::uint8_t>(rng())};
      erased.fill_box({static_cast<int>(rng() % (w / 2)), static_cast<int>(rng() % (h / 2)), w / 3, h / 3}, c);
    }
    TextLibrary lib;
    const int n = static_cast<int>(rng() % 5);
    for (int i = 0; i < n; ++i) {
      const int bw = 10 + static_cast<int>(rng() % (w - 10));
      const int bh = 8 + static_cast<int>(rng() % (h - 8));
      const PixelBox b{static_cast<int>(rng() % (w - bw + 1)), static_cast<int>(rng() % (h - bh + 1)), bw, bh};
      const auto status = static_cast<TextStatus>(rng() % 3);
      lib.items.push_back({"t" + std::to_string(i), "x", "label " + std::to_string(rng() % 1000), b, 0.9, status});
    }
    const auto out = compose_final(erased, lib);
    std::vector<PixelBox> allowed;
    for (const auto& t : lib.items) {
      if (t.status != TextStatus::Dropped) allowed.push_back(t.bbox);
    }
    for (const auto& p : diff_boxes(erased, out.image)) ASSERT_TRUE(inside_any(p, allowed)) << "trial " << trial;
  }
}

// --- prompt and render -----------------------------------------------------

TEST(Prompt, HeuristicModelCoversLabelsAndStyle) {
  auto gw = quiet_gateway();
  gw->register_backend(Capability::Text, std::make_shared<mock::HeuristicText>());
  const auto g = three_node_layout();
  StyleDescriptor style;
  const auto prompt = build_prompt(g, style, *gw);
  EXPECT_TRUE(missing_from_prompt(prompt, g, style).empty());
  EXPECT_NE(prompt.find(style.style_text), std::string::npos);
}

TEST(Prompt, PersistentOmissionNamesTheLabel) {
  auto gw = quiet_gateway();
  auto text = std::make_shared<mock::ScriptedBackend>(
      std::vector<std::string>{"```prompt\nA pastel figure with Rollout and Critic.\n```\n"});
  gw->register_backend(Capability::Text, text);
  LayoutGraph g;
  for (auto [id, label, x] : {std::tuple{"a", "Rollout", 40.0}, {"b", "Critic", 300.0}, {"c", "PPO", 560.0}}) {
    LayoutNode n;
    n.id = id;
    n.label = label;
    n.frame = {x, 100, 150, 60};
    g.nodes.push_back(n);
  }
  StyleDescriptor style;
  style.style_text = "pastel";
  try {
    build_prompt(g, style, *gw);
    FAIL() << "expected CoverageError";
  } catch (const CoverageError& e) {
    EXPECT_NE(std::string(e.what()).find("PPO"), std::string::npos);
  }
  EXPECT_EQ(text->invocations(), 2);
}

TEST(Prompt, EmptyGraphNeedsOnlyTheStyle) {
  auto gw = quiet_gateway();
  gw->register_backend(Capability::Text, std::make_shared<mock::HeuristicText>());
  StyleDescriptor style;
  const auto prompt = build_prompt(LayoutGraph{}, style, *gw);
  EXPECT_NE(prompt.find(style.style_text), std::string::npos);
  EXPECT_NE(prompt.find("800 x 450"), std::string::npos);
}

TEST(Render, IdentityMockReturnsConditioning) {
  auto gw = quiet_gateway();
  gw->register_backend(Capability::TextToImage, std::make_shared<mock::IdentityTextToImage>());
  Image cond(80, 45, {10, 200, 30});
  const auto r = render_polished({"p", cond, 80, 45}, *gw);
  EXPECT_EQ(r.image, cond);
  EXPECT_TRUE(r.warnings.empty());
}

TEST(Render, WrongSizeIsLetterboxedWithWarning) {
  auto gw = quiet_gateway();
  gw->register_backend(Capability::TextToImage, std::make_shared<mock::IdentityTextToImage>(false));
  Image cond(80, 45, {10, 200, 30});
  const auto r = render_polished({"p", cond, 160, 90}, *gw);
  EXPECT_EQ(r.image.width(), 160);
  EXPECT_EQ(r.image.height(), 90);
  EXPECT_FALSE(r.warnings.empty());
}

TEST(Render, JobValidation) {
  Image cond(80, 45);
  EXPECT_THROW(validate(RenderJob{"", cond, 80, 45}), PreconditionError);
  EXPECT_THROW(validate(RenderJob{"p", Image{}, 80, 45}), PreconditionError);
  EXPECT_THROW(validate(RenderJob{"p", cond, 0, 45}), PreconditionError);
  EXPECT_THROW(validate(RenderJob{"p", Image(80, 60), 80, 60}, Canvas{800, 450}), PreconditionError);
  EXPECT_NO_THROW(validate(RenderJob{"p", cond, 80, 45}, Canvas{800, 450}));
}

// --- whole stage -----------------------------------------------------------

TEST(Stage2, FullMockChainWritesEveryArtifact) {
  auto gw = quiet_gateway();
  mock::register_heuristic_mocks(*gw, {.ocr_drop_first_char_every = 2});
  Stage2Options opt;
  opt.out_dir = fresh_dir("full");
  const auto r = run_stage2(three_node_layout(), StyleDescriptor{}, *gw, opt);
  for (const char* f : {"prompt.txt", "polished.png", "library.json", "corrected_library.json", "erased.png",
                        "final.png", "final_overlay.svg"}) {
    EXPECT_TRUE(std::filesystem::exists(*opt.out_dir / f)) << f;
  }
  std::ifstream in(*opt.out_dir / "corrected_library.json");
  const auto lib = corrected_library_from_json(nlohmann::json::parse(in));
  EXPECT_EQ(lib, r.library);
  // Misreads were repaired: the final image shows every label exactly.
  std::multiset<std::string> seen;
  for (const auto& d : glyphs::decode(r.final_image, kBlack)) seen.insert(d.text);
  for (const auto& label : extract_labels(three_node_layout())) EXPECT_TRUE(seen.contains(label)) << label;
  EXPECT_EQ(read_png((*opt.out_dir / "final.png").string()), r.final_image);
}

TEST(Stage2, SkipFlagGivesPolishedBytes) {
  auto gw = quiet_gateway();
  mock::register_heuristic_mocks(*gw);
  Stage2Options opt;
  opt.skip_text_refinement = true;
  opt.out_dir = fresh_dir("skip");
  const auto r = run_stage2(three_node_layout(), StyleDescriptor{}, *gw, opt);
  EXPECT_EQ(r.final_image, r.polished);
  EXPECT_EQ(gw->stats(Capability::Ocr).calls, 0u);
  EXPECT_EQ(gw->stats(Capability::Erase).calls, 0u);
  EXPECT_EQ(read_file(*opt.out_dir / "final.png"), read_file(*opt.out_dir / "polished.png"));
  EXPECT_FALSE(std::filesystem::exists(*opt.out_dir / "library.json"));
}

TEST(Stage2, NoOcrItemsLeavesPolishedUntouched) {
  auto gw = quiet_gateway();
  mock::register_heuristic_mocks(*gw);
  gw->register_backend(Capability::Ocr, std::make_shared<mock::FunctionBackend>([](const BackendRequest&) {
                         return BackendReply{encode_ocr_items({}), MediaKind::Structured};
                       }));
  const auto r = run_stage2(three_node_layout(), StyleDescriptor{}, *gw);
  EXPECT_EQ(r.final_image, r.polished);
  EXPECT_TRUE(r.library.items.empty());
}
