#pragma once

#include <chrono>
#include <cstdlib>
#include <string>

#include <httplib.h>
#include <nlohmann/json.hpp>

#include "codefb/llm/provider.hpp"

namespace codefb::llm {

struct HttpEndpoint {
  std::string base_url = "https://api.openai.com/v1";
  std::string api_key;
  std::string model = "gpt-4";
  std::chrono::seconds timeout{120};

  /// CODEFB_BASE_URL, CODEFB_API_KEY, CODEFB_MODEL override the defaults.
  static HttpEndpoint from_env() {
    HttpEndpoint e;
    if (const char* v = std::getenv("CODEFB_BASE_URL")) e.base_url = v;
    if (const char* v = std::getenv("CODEFB_API_KEY")) e.api_key = v;
    if (const char* v = std::getenv("CODEFB_MODEL")) e.model = v;
    return e;
  }
};

namespace detail {

struct SplitUrl {
  std::string origin;  // scheme://host[:port]
  std::string path;    // "/v1", no trailing slash
};

inline SplitUrl split_url(const std::string& url) {
  auto scheme_end = url.find("://");
  auto host_start = scheme_end == std::string::npos ? 0 : scheme_end + 3;
  auto slash = url.find('/', host_start);
  SplitUrl s;
  s.origin = url.substr(0, slash);
  s.path = slash == std::string::npos ? "" : url.substr(slash);
  while (!s.path.empty() && s.path.back() == '/') s.path.pop_back();
  return s;
}

inline void classify_status(int status, const std::string& body) {
  if (status == 429 || status >= 500) throw TransportError("HTTP " + std::to_string(status) + ": " + body);
  if (status >= 400) throw ProviderRefusal("HTTP " + std::to_string(status) + ": " + body);
}

inline httplib::Result post_json(const HttpEndpoint& ep, const std::string& route, const nlohmann::json& body) {
  auto url = split_url(ep.base_url);
  httplib::Client client(url.origin);
  client.set_connection_timeout(ep.timeout);
  client.set_read_timeout(ep.timeout);
  client.set_write_timeout(ep.timeout);
  httplib::Headers headers;
  if (!ep.api_key.empty()) headers.emplace("Authorization", "Bearer " + ep.api_key);
  return client.Post(url.path + route, headers, body.dump(), "application/json");
}

}  // namespace detail

/// OpenAI-style chat endpoint: POST {base}/chat/completions with
/// {model, messages:[{role, content}], temperature, max_tokens}.
class HttpChatProvider : public Provider {
 public:
  explicit HttpChatProvider(HttpEndpoint ep) : ep_(std::move(ep)) {}

  static nlohmann::json request_body(const CompletionRequest& req, const std::string& default_model) {
    nlohmann::json msgs = nlohmann::json::array();
    for (const auto& m : req.messages) msgs.push_back({{"role", m.role}, {"content", m.content}});
    return {{"model", req.model_id.empty() ? default_model : req.model_id},
            {"messages", msgs},
            {"temperature", req.temperature},
            {"max_tokens", req.max_tokens}};
  }

  static std::string parse_response(const std::string& body) {
    auto j = nlohmann::json::parse(body, nullptr, false);
    if (j.is_discarded()) throw TransportError("unparseable response body");
    try {
      const auto& choice = j.at("choices").at(0);
      if (choice.value("finish_reason", "") == "content_filter") throw ProviderRefusal("content filtered");
      const auto& content = choice.at("message").at("content");
      if (content.is_null()) throw ProviderRefusal("empty content");
      return content.get<std::string>();
    } catch (const nlohmann::json::exception& e) {
      throw ProviderRefusal(std::string("unexpected response shape: ") + e.what());
    }
  }

  std::string complete(const CompletionRequest& request) override {
    auto res = detail::post_json(ep_, "/chat/completions", request_body(request, ep_.model));
    if (!res) throw TransportError("transport: " + httplib::to_string(res.error()));
    detail::classify_status(res->status, res->body);
    return parse_response(res->body);
  }

  std::string id() const override { return "http:" + ep_.model; }

 private:
  HttpEndpoint ep_;
};

}  // namespace codefb::llm
