#include "figforge/remote_backends.hpp"

#include <sys/wait.h>
#include <unistd.h>

#include <atomic>
#include <cstdio>
#include <cstdlib>
#include <filesystem>

#include <httplib.h>

#include "figforge/error.hpp"
#include "figforge/util.hpp"

namespace figforge {

using json = nlohmann::json;
namespace fs = std::filesystem;

json encode_wire_request(const BackendRequest& request, const std::string& model) {
  json j;
  j["capability"] = to_string(request.capability);
  j["model"] = model;
  j["params"] = json(request.params);
  j["prompt"] = request.prompt;
  json images = json::array();
  for (const Image& img : request.images) images.push_back(base64_encode(encode_png(img)));
  j["images"] = std::move(images);
  json boxes = json::array();
  for (const PixelBox& b : request.boxes) boxes.push_back({b.x, b.y, b.w, b.h});
  j["boxes"] = std::move(boxes);
  return j;
}

BackendReply decode_wire_response(const json& response) {
  try {
    if (response.contains("text")) return {response.at("text").get<std::string>(), MediaKind::Text};
    if (response.contains("image")) {
      return {base64_decode(response.at("image").get<std::string>()), MediaKind::Image};
    }
    if (response.contains("items")) {
      const auto items = decode_ocr_items(response.dump());
      return {encode_ocr_items(items), MediaKind::Structured};
    }
  } catch (const json::exception& e) {
    throw PermanentFailure(std::string("malformed backend response: ") + e.what());
  } catch (const DecodeError& e) {
    throw PermanentFailure(std::string("malformed backend response: ") + e.what());
  }
  throw PermanentFailure("backend response has none of text/image/items");
}

HttpBackend::HttpBackend(std::string endpoint, std::string model, std::string auth_env, int timeout_seconds)
    : model_(std::move(model)), auth_env_(std::move(auth_env)), timeout_seconds_(timeout_seconds) {
  const auto scheme_end = endpoint.find("://");
  if (scheme_end == std::string::npos) throw ValidationError("endpoint must be an http(s) URL: " + endpoint);
  const auto path_start = endpoint.find('/', scheme_end + 3);
  scheme_host_port_ = endpoint.substr(0, path_start);
  path_ = path_start == std::string::npos ? "/" : endpoint.substr(path_start);
}

BackendReply HttpBackend::invoke(const BackendRequest& request) {
  httplib::Client client(scheme_host_port_);
  client.set_connection_timeout(timeout_seconds_, 0);
  client.set_read_timeout(timeout_seconds_, 0);
  client.set_write_timeout(timeout_seconds_, 0);
  httplib::Headers headers;
  if (!auth_env_.empty()) {
    if (const char* token = std::getenv(auth_env_.c_str()); token != nullptr && *token != '\0') {
      headers.emplace("Authorization", std::string("Bearer ") + token);
    }
  }
  const std::string body = encode_wire_request(request, model_).dump();
  auto result = client.Post(path_, headers, body, "application/json");
  if (!result) {
    throw TransientFailure("HTTP request to " + scheme_host_port_ + path_ +
                           " failed: " + httplib::to_string(result.error()));
  }
  const int status = result->status;
  if (status == 408 || status == 429 || status >= 500) {
    throw TransientFailure("HTTP " + std::to_string(status) + " from " + scheme_host_port_);
  }
  if (status < 200 || status >= 300) {
    throw PermanentFailure("HTTP " + std::to_string(status) + ": " + result->body.substr(0, 200));
  }
  json parsed;
  try {
    parsed = json::parse(result->body);
  } catch (const json::exception& e) {
    throw PermanentFailure(std::string("response is not JSON: ") + e.what());
  }
  return decode_wire_response(parsed);
}

SubprocessBackend::SubprocessBackend(std::string command, std::string model)
    : command_(std::move(command)), model_(std::move(model)) {
  if (command_.empty()) throw ValidationError("subprocess backend needs a command");
}

namespace {

std::string shell_quote(const std::string& s) {
  std::string out = "'";
  for (char c : s) {
    if (c == '\'') {
      out += "'\\''";
    } else {
      out.push_back(c);
    }
  }
  out.push_back('\'');
  return out;
}

}  // namespace

BackendReply SubprocessBackend::invoke(const BackendRequest& request) {
  static std::atomic<unsigned long> counter{0};
  const fs::path request_path = fs::temp_directory_path() / ("figforge-req-" + std::to_string(::getpid()) + "-" +
                                                              std::to_string(counter.fetch_add(1)) + ".json");
  write_file_atomic(request_path, encode_wire_request(request, model_).dump());
  const std::string cmd = command_ + " " + shell_quote(request_path.string());
  std::string output;
  FILE* pipe = ::popen(cmd.c_str(), "r");
  if (pipe == nullptr) {
    fs::remove(request_path);
    throw TransientFailure("cannot spawn: " + command_);
  }
  char buf[4096];
  std::size_t n = 0;
  while ((n = std::fread(buf, 1, sizeof buf, pipe)) > 0) output.append(buf, n);
  const int status = ::pclose(pipe);
  std::error_code ec;
  fs::remove(request_path, ec);
  const int code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  if (code == 75) throw TransientFailure("subprocess reported a temporary failure");
  if (code != 0) throw PermanentFailure("subprocess exited with status " + std::to_string(code));
  json parsed;
  try {
    parsed = json::parse(output);
  } catch (const json::exception& e) {
    throw PermanentFailure(std::string("subprocess output is not JSON: ") + e.what());
  }
  return decode_wire_response(parsed);
}

}  // namespace figforge
