#include "figforge/gateway.hpp"

#include <algorithm>
#include <cmath>
#include <ctime>
#include <thread>

#include <nlohmann/json.hpp>

#include "figforge/error.hpp"
#include "figforge/util.hpp"

namespace figforge {

using json = nlohmann::json;
namespace fs = std::filesystem;

std::string_view to_string(Capability c) {
  switch (c) {
    case Capability::Text: return "text";
    case Capability::Vision: return "vision";
    case Capability::TextToImage: return "text_to_image";
    case Capability::Ocr: return "ocr";
    case Capability::Erase: return "erase";
  }
  return "unknown";
}

Capability capability_from_string(std::string_view s) {
  for (Capability c : kAllCapabilities) {
    if (to_string(c) == s) return c;
  }
  throw ValidationError("unknown capability '" + std::string(s) + "'");
}

std::string_view to_string(MediaKind k) {
  switch (k) {
    case MediaKind::Text: return "text";
    case MediaKind::Image: return "image";
    case MediaKind::Structured: return "structured";
  }
  return "text";
}

MediaKind media_kind_from_string(std::string_view s) {
  if (s == "image") return MediaKind::Image;
  if (s == "structured") return MediaKind::Structured;
  if (s == "text") return MediaKind::Text;
  throw DecodeError("unknown media kind '" + std::string(s) + "'");
}

std::string BackendRequest::canonical() const {
  json j;
  j["capability"] = to_string(capability);
  j["prompt"] = prompt;
  json imgs = json::array();
  for (const Image& img : images) {
    std::string header = std::to_string(img.width()) + "x" + std::to_string(img.height()) + ":";
    imgs.push_back(sha256_hex(header + std::string(reinterpret_cast<const char*>(img.bytes().data()),
                                                   img.bytes().size())));
  }
  j["images"] = std::move(imgs);
  json bx = json::array();
  for (const PixelBox& b : boxes) bx.push_back({b.x, b.y, b.w, b.h});
  j["boxes"] = std::move(bx);
  j["params"] = json(params);
  return j.dump();
}

std::string BackendRequest::cache_key() const { return sha256_hex(canonical()); }

std::chrono::milliseconds RetryPolicy::delay_before(int attempt) const {
  if (attempt <= 1) return std::chrono::milliseconds{0};
  const double ms = static_cast<double>(base_delay.count()) * std::pow(factor, attempt - 2);
  return std::chrono::milliseconds{static_cast<std::int64_t>(std::llround(ms))};
}

Gateway::Gateway(GatewayOptions options) : options_(std::move(options)) {
  if (!options_.sleep) {
    options_.sleep = [](std::chrono::milliseconds d) { std::this_thread::sleep_for(d); };
  }
  if (options_.retry.max_attempts < 1) throw ValidationError("retry.max_attempts must be >= 1");
}

void Gateway::register_backend(Capability capability, std::shared_ptr<Backend> backend, SlotConfig slot) {
  if (!backend) throw ValidationError("null backend for " + std::string(to_string(capability)));
  std::lock_guard lock(mutex_);
  slots_[capability] = Slot{std::move(backend), std::move(slot), {}, {}};
}

bool Gateway::has_backend(Capability capability) const {
  std::lock_guard lock(mutex_);
  return slots_.contains(capability);
}

CapabilityStats Gateway::stats(Capability capability) const {
  std::lock_guard lock(mutex_);
  auto it = slots_.find(capability);
  return it == slots_.end() ? CapabilityStats{} : it->second.stats;
}

std::optional<BackendResponse> Gateway::cache_lookup(const std::string& key) const {
  if (!options_.cache_dir) return std::nullopt;
  const fs::path bin = *options_.cache_dir / (key + ".bin");
  const fs::path meta = *options_.cache_dir / (key + ".meta");
  std::error_code ec;
  if (!fs::exists(bin, ec) || !fs::exists(meta, ec)) return std::nullopt;
  try {
    const json m = json::parse(read_file(meta));
    BackendResponse r;
    r.body = read_file(bin);
    r.media_kind = media_kind_from_string(m.at("media_kind").get<std::string>());
    r.from_cache = true;
    return r;
  } catch (const std::exception&) {
    // A torn or foreign entry is treated as a miss and overwritten.
    return std::nullopt;
  }
}

void Gateway::cache_store(const std::string& key, Capability capability, const BackendReply& reply) const {
  if (!options_.cache_dir) return;
  json meta;
  meta["capability"] = to_string(capability);
  meta["media_kind"] = to_string(reply.media_kind);
  meta["timestamp"] = static_cast<std::int64_t>(std::time(nullptr));
  write_file_atomic(*options_.cache_dir / (key + ".bin"), reply.body);
  write_file_atomic(*options_.cache_dir / (key + ".meta"), meta.dump());
}

void Gateway::wait_for_rate_limit(Capability capability) {
  std::chrono::steady_clock::duration wait{};
  {
    std::lock_guard lock(mutex_);
    Slot& slot = slots_.at(capability);
    if (slot.config.rate_limit_per_minute <= 0) return;
    const auto interval = std::chrono::duration_cast<std::chrono::steady_clock::duration>(
        std::chrono::milliseconds(60000 / slot.config.rate_limit_per_minute));
    const auto now = std::chrono::steady_clock::now();
    const auto start = std::max(now, slot.next_allowed);
    slot.next_allowed = start + interval;
    wait = start - now;
  }
  if (wait > std::chrono::steady_clock::duration::zero()) {
    options_.sleep(std::chrono::ceil<std::chrono::milliseconds>(wait));
  }
}

BackendResponse Gateway::call(BackendRequest request) {
  std::shared_ptr<Backend> backend;
  {
    std::lock_guard lock(mutex_);
    auto it = slots_.find(request.capability);
    if (it == slots_.end()) {
      throw NoBackend("no backend registered for capability '" + std::string(to_string(request.capability)) + "'");
    }
    backend = it->second.backend;
    for (const auto& [k, v] : it->second.config.default_params) request.params.try_emplace(k, v);
    ++it->second.stats.calls;
  }
  if (request.capability == Capability::Text || request.capability == Capability::Vision) {
    request.params.try_emplace("temperature", "0");
  }

  const std::string key = request.cache_key();
  if (auto hit = cache_lookup(key)) {
    std::lock_guard lock(mutex_);
    ++slots_.at(request.capability).stats.cache_hits;
    return *hit;
  }

  const RetryPolicy& retry = options_.retry;
  std::string last_error;
  for (int attempt = 1; attempt <= retry.max_attempts; ++attempt) {
    if (attempt > 1) {
      options_.sleep(retry.delay_before(attempt));
      std::lock_guard lock(mutex_);
      ++slots_.at(request.capability).stats.retries;
    }
    wait_for_rate_limit(request.capability);
    {
      std::lock_guard lock(mutex_);
      ++slots_.at(request.capability).stats.invocations;
    }
    const auto started = std::chrono::steady_clock::now();
    try {
      BackendReply reply = backend->invoke(request);
      const auto elapsed = std::chrono::steady_clock::now() - started;
      cache_store(key, request.capability, reply);
      BackendResponse response;
      response.body = std::move(reply.body);
      response.media_kind = reply.media_kind;
      response.latency_ms = std::chrono::duration_cast<std::chrono::milliseconds>(elapsed).count();
      return response;
    } catch (const TransientFailure& e) {
      last_error = e.what();
    } catch (const PermanentFailure& e) {
      throw BackendRejected(std::string(to_string(request.capability)) + " backend rejected the request: " +
                            e.what());
    }
  }
  throw Exhausted(std::string(to_string(request.capability)) + " backend failed after " +
                  std::to_string(retry.max_attempts) + " attempts: " + last_error);
}

std::string encode_ocr_items(std::span<const OcrItem> items) {
  json arr = json::array();
  for (const OcrItem& item : items) {
    arr.push_back({{"text", item.text},
                   {"bbox", {item.bbox.x, item.bbox.y, item.bbox.w, item.bbox.h}},
                   {"confidence", item.confidence}});
  }
  return json{{"items", arr}}.dump();
}

std::vector<OcrItem> decode_ocr_items(std::string_view body) {
  std::vector<OcrItem> items;
  try {
    const json j = json::parse(body);
    for (const json& e : j.at("items")) {
      OcrItem item;
      item.text = e.at("text").get<std::string>();
      const auto& b = e.at("bbox");
      item.bbox = {b.at(0).get<int>(), b.at(1).get<int>(), b.at(2).get<int>(), b.at(3).get<int>()};
      item.confidence = e.value("confidence", 1.0);
      items.push_back(std::move(item));
    }
  } catch (const json::exception& e) {
    throw BackendError(std::string("malformed OCR reply: ") + e.what());
  }
  return items;
}

std::string complete_text(Gateway& gateway, std::string prompt, std::map<std::string, std::string> params) {
  BackendRequest req;
  req.capability = Capability::Text;
  req.prompt = std::move(prompt);
  req.params = std::move(params);
  return gateway.call(std::move(req)).body;
}

std::string ask_vision(Gateway& gateway, std::string prompt, std::vector<Image> images,
                       std::map<std::string, std::string> params) {
  BackendRequest req;
  req.capability = Capability::Vision;
  req.prompt = std::move(prompt);
  req.images = std::move(images);
  req.params = std::move(params);
  return gateway.call(std::move(req)).body;
}

Image text_to_image(Gateway& gateway, std::string prompt, const Image& conditioning, int width, int height) {
  BackendRequest req;
  req.capability = Capability::TextToImage;
  req.prompt = std::move(prompt);
  req.images.push_back(conditioning);
  req.params["size"] = std::to_string(width) + "x" + std::to_string(height);
  const BackendResponse resp = gateway.call(std::move(req));
  try {
    return decode_png(resp.body);
  } catch (const DecodeError& e) {
    throw BackendError(std::string("text-to-image backend returned an unreadable image: ") + e.what());
  }
}

std::vector<OcrItem> ocr(Gateway& gateway, const Image& image) {
  if (image.empty()) throw PreconditionError("OCR input image is empty");
  BackendRequest req;
  req.capability = Capability::Ocr;
  req.images.push_back(image);
  std::vector<OcrItem> raw = decode_ocr_items(gateway.call(std::move(req)).body);
  std::vector<OcrItem> items;
  for (OcrItem& item : raw) {
    const int x0 = std::clamp(item.bbox.x, 0, image.width());
    const int y0 = std::clamp(item.bbox.y, 0, image.height());
    const int x1 = std::clamp(item.bbox.right(), 0, image.width());
    const int y1 = std::clamp(item.bbox.bottom(), 0, image.height());
    if (x1 <= x0 || y1 <= y0) continue;
    item.bbox = {x0, y0, x1 - x0, y1 - y0};
    item.confidence = std::clamp(item.confidence, 0.0, 1.0);
    items.push_back(std::move(item));
  }
  std::stable_sort(items.begin(), items.end(), [](const OcrItem& a, const OcrItem& b) {
    return std::tie(a.bbox.y, a.bbox.x) < std::tie(b.bbox.y, b.bbox.x);
  });
  return items;
}

Image erase_text(Gateway& gateway, const Image& image, std::span<const PixelBox> boxes) {
  if (image.empty()) throw PreconditionError("erase input image is empty");
  for (const PixelBox& b : boxes) {
    if (!image.in_bounds(b)) {
      throw PreconditionError("erase box (" + std::to_string(b.x) + "," + std::to_string(b.y) + "," +
                              std::to_string(b.w) + "," + std::to_string(b.h) + ") lies outside the image");
    }
  }
  if (boxes.empty()) return image;
  BackendRequest req;
  req.capability = Capability::Erase;
  req.images.push_back(image);
  req.boxes.assign(boxes.begin(), boxes.end());
  const BackendResponse resp = gateway.call(std::move(req));
  Image out;
  try {
    out = decode_png(resp.body);
  } catch (const DecodeError& e) {
    throw BackendError(std::string("eraser returned an unreadable image: ") + e.what());
  }
  if (out.width() != image.width() || out.height() != image.height()) {
    throw BackendError("eraser changed the image dimensions");
  }
  return out;
}

}  // namespace figforge
