#include "figforge/mock_backends.hpp"

#include <map>

#include "figforge/error.hpp"

namespace figforge::mock {

ScriptedBackend::ScriptedBackend(std::vector<std::string> replies) {
  for (auto& r : replies) steps_.push_back(reply(std::move(r)));
}

BackendReply ScriptedBackend::invoke(const BackendRequest& request) {
  std::lock_guard lock(mutex_);
  prompts_.push_back(request.prompt);
  if (steps_.empty()) throw PermanentFailure("scripted backend has no steps");
  const Step& step = steps_[std::min(next_, steps_.size() - 1)];
  ++next_;
  switch (step.action) {
    case Action::Transient: throw TransientFailure("scripted transient failure");
    case Action::Permanent: throw PermanentFailure("scripted permanent failure");
    case Action::Reply: break;
  }
  return {step.body, step.media_kind};
}

int ScriptedBackend::invocations() const {
  std::lock_guard lock(mutex_);
  return static_cast<int>(next_);
}

std::vector<std::string> ScriptedBackend::prompts() const {
  std::lock_guard lock(mutex_);
  return prompts_;
}

Image ring_fill_erase(const Image& image, const std::vector<PixelBox>& boxes) {
  Image out = image;
  for (const PixelBox& box : boxes) {
    std::map<Rgb, int> counts;
    auto sample = [&](int x, int y) {
      if (x < 0 || y < 0 || x >= image.width() || y >= image.height()) return;
      ++counts[image.at(x, y)];
    };
    for (int x = box.x - 1; x <= box.right(); ++x) {
      sample(x, box.y - 1);
      sample(x, box.bottom());
    }
    for (int y = box.y; y < box.bottom(); ++y) {
      sample(box.x - 1, y);
      sample(box.right(), y);
    }
    Rgb fill = kWhite;
    int best = -1;
    for (const auto& [color, n] : counts) {
      // std::map iterates in colour order, so ties resolve deterministically.
      if (n > best) {
        best = n;
        fill = color;
      }
    }
    out.fill_box(box, fill);
  }
  return out;
}

BackendReply RingFillEraser::invoke(const BackendRequest& request) {
  if (request.images.size() != 1) throw PermanentFailure("eraser expects exactly one image");
  return {encode_png(ring_fill_erase(request.images.front(), request.boxes)), MediaKind::Image};
}

BackendReply IdentityTextToImage::invoke(const BackendRequest& request) {
  if (request.images.empty()) throw PermanentFailure("text-to-image mock needs a conditioning image");
  const Image& cond = request.images.front();
  if (honour_size_) {
    auto it = request.params.find("size");
    if (it != request.params.end()) {
      const auto x = it->second.find('x');
      const int w = std::stoi(it->second.substr(0, x));
      const int h = std::stoi(it->second.substr(x + 1));
      if (w != cond.width() || h != cond.height()) {
        return {encode_png(resize_letterbox(cond, w, h)), MediaKind::Image};
      }
    }
  }
  return {encode_png(cond), MediaKind::Image};
}

}  // namespace figforge::mock
