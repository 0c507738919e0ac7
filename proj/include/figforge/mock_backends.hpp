#pragma once

#include <atomic>
#include <deque>
#include <functional>
#include <mutex>
#include <string>
#include <vector>

#include "figforge/gateway.hpp"

namespace figforge::mock {

// Wraps a callable. Counts invocations.
class FunctionBackend : public Backend {
 public:
  using Fn = std::function<BackendReply(const BackendRequest&)>;
  explicit FunctionBackend(Fn fn) : fn_(std::move(fn)) {}
  BackendReply invoke(const BackendRequest& request) override {
    ++invocations_;
    return fn_(request);
  }
  int invocations() const { return invocations_.load(); }

 private:
  Fn fn_;
  std::atomic<int> invocations_{0};
};

// Returns the prompt unchanged.
class EchoBackend : public Backend {
 public:
  BackendReply invoke(const BackendRequest& request) override {
    ++invocations_;
    return {request.prompt, MediaKind::Text};
  }
  int invocations() const { return invocations_.load(); }

 private:
  std::atomic<int> invocations_{0};
};

// Plays back a fixed sequence of replies. A step may instead fail
// transiently or permanently. Once the script runs out the last step repeats.
class ScriptedBackend : public Backend {
 public:
  enum class Action { Reply, Transient, Permanent };
  struct Step {
    Action action = Action::Reply;
    std::string body;
    MediaKind media_kind = MediaKind::Text;
  };

  ScriptedBackend() = default;
  explicit ScriptedBackend(std::vector<std::string> replies);
  explicit ScriptedBackend(std::vector<Step> steps) : steps_(std::move(steps)) {}

  static Step reply(std::string body, MediaKind kind = MediaKind::Text) { return {Action::Reply, std::move(body), kind}; }
  static Step transient() { return {Action::Transient, {}, MediaKind::Text}; }
  static Step permanent() { return {Action::Permanent, {}, MediaKind::Text}; }

  BackendReply invoke(const BackendRequest& request) override;
  int invocations() const;
  // Prompts seen, in order.
  std::vector<std::string> prompts() const;

 private:
  mutable std::mutex mutex_;
  std::vector<Step> steps_;
  std::size_t next_ = 0;
  std::vector<std::string> prompts_;
};

// Eraser that fills each box with the most common colour on the one-pixel
// ring surrounding it. Pixels outside the boxes are untouched.
class RingFillEraser : public Backend {
 public:
  BackendReply invoke(const BackendRequest& request) override;
};

// Text-to-image stand-in returning the conditioning image, scaled to the
// requested size when `honour_size` is set.
class IdentityTextToImage : public Backend {
 public:
  explicit IdentityTextToImage(bool honour_size = true) : honour_size_(honour_size) {}
  BackendReply invoke(const BackendRequest& request) override;

 private:
  bool honour_size_;
};

// Pure function used by RingFillEraser, exposed for tests.
Image ring_fill_erase(const Image& image, const std::vector<PixelBox>& boxes);

}  // namespace figforge::mock
