#pragma once

#include <string>

#include <nlohmann/json.hpp>

#include "figforge/gateway.hpp"

namespace figforge {

// Wire format shared by the http and subprocess backends.
//
// Request:  {"capability", "model", "params", "prompt",
//            "images": [base64 PNG...], "boxes": [[x,y,w,h]...]}
// Response: {"text": "..."} | {"image": "<base64 PNG>"} |
//           {"items": [{"text", "bbox": [x,y,w,h], "confidence"}]}
nlohmann::json encode_wire_request(const BackendRequest& request, const std::string& model);
BackendReply decode_wire_response(const nlohmann::json& response);

// POSTs the wire request as JSON. 408, 429 and 5xx are retryable, other
// non-2xx statuses are not. The bearer token is read from `auth_env` at call
// time when that variable is non-empty.
class HttpBackend : public Backend {
 public:
  HttpBackend(std::string endpoint, std::string model, std::string auth_env, int timeout_seconds = 120);
  BackendReply invoke(const BackendRequest& request) override;

 private:
  std::string scheme_host_port_;
  std::string path_;
  std::string model_;
  std::string auth_env_;
  int timeout_seconds_;
};

// Runs `command <request.json>` and reads the wire response from stdout.
// Exit status 75 (EX_TEMPFAIL) is retryable; any other failure is not.
class SubprocessBackend : public Backend {
 public:
  SubprocessBackend(std::string command, std::string model);
  BackendReply invoke(const BackendRequest& request) override;

 private:
  std::string command_;
  std::string model_;
};

}  // namespace figforge
