#pragma once

#include <array>
#include <atomic>
#include <chrono>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "figforge/image.hpp"

namespace figforge {

enum class Capability { Text, Vision, TextToImage, Ocr, Erase };
inline constexpr std::array kAllCapabilities{Capability::Text, Capability::Vision, Capability::TextToImage,
                                             Capability::Ocr, Capability::Erase};

std::string_view to_string(Capability c);
Capability capability_from_string(std::string_view s);

enum class MediaKind { Text, Image, Structured };
std::string_view to_string(MediaKind k);
MediaKind media_kind_from_string(std::string_view s);

struct BackendRequest {
  Capability capability = Capability::Text;
  std::string prompt;
  std::vector<Image> images;
  std::vector<PixelBox> boxes;
  // std::map keeps keys sorted, so parameter insertion order never leaks
  // into the canonical form.
  std::map<std::string, std::string> params;

  // Stable byte serialization: sorted keys, images replaced by their digest.
  std::string canonical() const;
  std::string cache_key() const;
};

struct BackendReply {
  std::string body;
  MediaKind media_kind = MediaKind::Text;
};

struct BackendResponse {
  std::string body;
  MediaKind media_kind = MediaKind::Text;
  std::int64_t latency_ms = 0;
  bool from_cache = false;
};

// A concrete provider for one capability. Implementations throw
// TransientFailure for retryable problems and PermanentFailure otherwise.
class Backend {
 public:
  virtual ~Backend() = default;
  virtual BackendReply invoke(const BackendRequest& request) = 0;
};

struct RetryPolicy {
  int max_attempts = 5;
  std::chrono::milliseconds base_delay{1000};
  double factor = 2.0;

  // Delay slept before attempt `attempt` (1-based; attempt 1 has none).
  std::chrono::milliseconds delay_before(int attempt) const;
};

using SleepFn = std::function<void(std::chrono::milliseconds)>;

struct GatewayOptions {
  std::optional<std::filesystem::path> cache_dir;
  RetryPolicy retry;
  // Injected so tests never wall-clock sleep. Defaults to this_thread::sleep_for.
  SleepFn sleep;
};

struct SlotConfig {
  int rate_limit_per_minute = 0;  // 0 disables limiting
  std::map<std::string, std::string> default_params;
};

struct CapabilityStats {
  std::uint64_t calls = 0;
  std::uint64_t invocations = 0;
  std::uint64_t cache_hits = 0;
  std::uint64_t retries = 0;
};

// Shared access point to the five capability slots. Thread-safe.
class Gateway {
 public:
  explicit Gateway(GatewayOptions options = {});

  void register_backend(Capability capability, std::shared_ptr<Backend> backend, SlotConfig slot = {});
  bool has_backend(Capability capability) const;

  // Cached, retried, rate-limited call. Errors: NoBackend, Exhausted,
  // BackendRejected.
  BackendResponse call(BackendRequest request);

  CapabilityStats stats(Capability capability) const;
  const GatewayOptions& options() const { return options_; }

 private:
  struct Slot {
    std::shared_ptr<Backend> backend;
    SlotConfig config;
    std::chrono::steady_clock::time_point next_allowed{};
    CapabilityStats stats;
  };

  std::optional<BackendResponse> cache_lookup(const std::string& key) const;
  void cache_store(const std::string& key, Capability capability, const BackendReply& reply) const;
  void wait_for_rate_limit(Capability capability);

  GatewayOptions options_;
  mutable std::mutex mutex_;
  std::map<Capability, Slot> slots_;
};

struct OcrItem {
  std::string text;
  PixelBox bbox;
  double confidence = 0.0;

  friend bool operator==(const OcrItem&, const OcrItem&) = default;
};

// Wire helpers for OCR replies: {"items":[{"text","bbox":[x,y,w,h],"confidence"}]}.
std::string encode_ocr_items(std::span<const OcrItem> items);
std::vector<OcrItem> decode_ocr_items(std::string_view body);

// Typed entry points over Gateway::call.
std::string complete_text(Gateway& gateway, std::string prompt, std::map<std::string, std::string> params = {});
std::string ask_vision(Gateway& gateway, std::string prompt, std::vector<Image> images,
                       std::map<std::string, std::string> params = {});
Image text_to_image(Gateway& gateway, std::string prompt, const Image& conditioning, int width, int height);

// Items come back sorted by (y, x) with boxes clipped to the image. Boxes that
// clip to nothing are dropped.
std::vector<OcrItem> ocr(Gateway& gateway, const Image& image);

// Inpaints inside `boxes`. Every box must lie inside the image; this is
// checked before the backend is contacted.
Image erase_text(Gateway& gateway, const Image& image, std::span<const PixelBox> boxes);

}  // namespace figforge
