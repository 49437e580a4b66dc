#pragma once

#include <algorithm>
#include <atomic>
#include <chrono>
#include <deque>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include <nlohmann/json.hpp>

#include "codefb/core/types.hpp"
#include "codefb/util/text.hpp"

namespace codefb::llm {

struct ChatMessage {
  std::string role;  // "system" | "user" | "assistant"
  std::string content;
  friend bool operator==(const ChatMessage&, const ChatMessage&) = default;
};

struct CompletionRequest {
  std::vector<ChatMessage> messages;
  double temperature = 0.0;
  int max_tokens = 2048;
  std::string model_id;

  const ChatMessage* last(std::string_view role) const {
    for (auto it = messages.rbegin(); it != messages.rend(); ++it) {
      if (it->role == role) return &*it;
    }
    return nullptr;
  }
  const ChatMessage* first(std::string_view role) const {
    for (const auto& m : messages) {
      if (m.role == role) return &m;
    }
    return nullptr;
  }
  /// Every message body, concatenated; used for prompt audits.
  std::string joined() const {
    std::string out;
    for (const auto& m : messages) {
      out += m.content;
      out += '\n';
    }
    return out;
  }
};

/// Chat view of a dialogue. Execution feedback travels as a user turn since
/// the common chat schema has no tool role for it.
inline std::vector<ChatMessage> to_chat(const Dialogue& d, std::string_view system_prompt = {}) {
  std::vector<ChatMessage> out;
  if (!system_prompt.empty()) out.push_back({"system", std::string(system_prompt)});
  for (const auto& m : d.messages) {
    out.push_back({m.role() == Role::Assistant ? "assistant" : "user", m.content()});
  }
  return out;
}

struct ProviderError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
/// Network-level or 5xx/429 failure; worth retrying.
struct TransportError : ProviderError {
  using ProviderError::ProviderError;
};
/// The provider answered but will not produce content (4xx, policy refusal).
struct ProviderRefusal : ProviderError {
  using ProviderError::ProviderError;
};
struct ScriptExhausted : ProviderError {
  ScriptExhausted() : ProviderError("script exhausted") {}
};

class Provider {
 public:
  virtual ~Provider() = default;
  virtual std::string complete(const CompletionRequest& request) = 0;
  virtual std::string id() const = 0;
};

struct RetryPolicy {
  int max_retries = 3;
  std::chrono::milliseconds initial_backoff{500};
  double multiplier = 2.0;
};

/// Retries TransportError with exponential backoff; anything else propagates
/// at once.
inline std::string complete(Provider& provider, const CompletionRequest& request, const RetryPolicy& policy = {}) {
  auto backoff = policy.initial_backoff;
  for (int attempt = 0;; ++attempt) {
    try {
      return provider.complete(request);
    } catch (const TransportError&) {
      if (attempt >= policy.max_retries) throw;
      std::this_thread::sleep_for(backoff);
      backoff = std::chrono::milliseconds(static_cast<long long>(static_cast<double>(backoff.count()) * policy.multiplier));
    }
  }
}

/// Pops canned responses in order. Routes, when set, give separate queues
/// keyed by a substring of the first user message so concurrent loops over
/// different tasks stay deterministic.
class ScriptedProvider : public Provider {
 public:
  ScriptedProvider() = default;
  explicit ScriptedProvider(std::vector<std::string> responses) : queue_(responses.begin(), responses.end()) {}

  void push(std::string response) {
    std::lock_guard lock(mu_);
    queue_.push_back(std::move(response));
  }

  void route(std::string key, std::vector<std::string> responses) {
    std::lock_guard lock(mu_);
    routes_.emplace_back(std::move(key), std::deque<std::string>(responses.begin(), responses.end()));
  }

  std::string complete(const CompletionRequest& request) override {
    std::lock_guard lock(mu_);
    ++calls_;
    if (const auto* u = request.first("user")) {
      for (auto& [key, q] : routes_) {
        if (!util::contains(u->content, key)) continue;
        if (q.empty()) throw ScriptExhausted();
        auto r = std::move(q.front());
        q.pop_front();
        return r;
      }
    }
    if (queue_.empty()) throw ScriptExhausted();
    auto r = std::move(queue_.front());
    queue_.pop_front();
    return r;
  }

  std::string id() const override { return "scripted"; }

  std::size_t remaining() const {
    std::lock_guard lock(mu_);
    auto n = queue_.size();
    for (const auto& [k, q] : routes_) n += q.size();
    return n;
  }
  std::size_t calls() const {
    std::lock_guard lock(mu_);
    return calls_;
  }

  /// {"responses": [...], "routes": {"key": [...]}}; either part is optional.
  static std::unique_ptr<ScriptedProvider> from_json(const nlohmann::json& j) {
    auto p = std::make_unique<ScriptedProvider>();
    if (j.is_array()) {
      for (const auto& r : j) p->push(r.get<std::string>());
      return p;
    }
    if (auto it = j.find("responses"); it != j.end()) {
      for (const auto& r : *it) p->push(r.get<std::string>());
    }
    if (auto it = j.find("routes"); it != j.end()) {
      for (const auto& [key, list] : it->items()) p->route(key, list.get<std::vector<std::string>>());
    }
    return p;
  }

  static std::unique_ptr<ScriptedProvider> from_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open script " + path.string());
    return from_json(nlohmann::json::parse(in));
  }

 private:
  mutable std::mutex mu_;
  std::deque<std::string> queue_;
  std::vector<std::pair<std::string, std::deque<std::string>>> routes_;
  std::size_t calls_ = 0;
};

/// Returns the last user message verbatim.
class EchoProvider : public Provider {
 public:
  std::string complete(const CompletionRequest& request) override {
    const auto* u = request.last("user");
    if (!u) throw ProviderRefusal("echo provider: request has no user message");
    return u->content;
  }
  std::string id() const override { return "echo"; }
};

/// Answers with the reference solution of whichever registered task's prompt
/// appears in the first user message, wrapped in a fence.
class OracleProvider : public Provider {
 public:
  struct Entry {
    std::string prompt;
    std::string solution;
    std::string language;
  };

  explicit OracleProvider(std::vector<Entry> entries) : entries_(std::move(entries)) {
    // Longest prompt first so a prompt that contains another still wins.
    std::stable_sort(entries_.begin(), entries_.end(),
                     [](const Entry& a, const Entry& b) { return a.prompt.size() > b.prompt.size(); });
  }

  std::string complete(const CompletionRequest& request) override {
    const auto* u = request.first("user");
    if (u) {
      for (const auto& e : entries_) {
        if (!e.prompt.empty() && util::contains(u->content, e.prompt))
          return "```" + e.language + "\n" + e.solution + "\n```";
      }
    }
    throw ProviderRefusal("oracle provider: no known task in request");
  }
  std::string id() const override { return "oracle"; }

 private:
  std::vector<Entry> entries_;
};

/// Wraps a provider and remembers every request it forwards.
class RecordingProvider : public Provider {
 public:
  explicit RecordingProvider(Provider& inner) : inner_(inner) {}

  std::string complete(const CompletionRequest& request) override {
    {
      std::lock_guard lock(mu_);
      requests_.push_back(request);
    }
    return inner_.complete(request);
  }
  std::string id() const override { return inner_.id(); }

  std::vector<CompletionRequest> requests() const {
    std::lock_guard lock(mu_);
    return requests_;
  }
  std::size_t calls() const {
    std::lock_guard lock(mu_);
    return requests_.size();
  }

 private:
  Provider& inner_;
  mutable std::mutex mu_;
  std::vector<CompletionRequest> requests_;
};

/// Adapts a callable; handy in tests.
class FunctionProvider : public Provider {
 public:
  using Fn = std::function<std::string(const CompletionRequest&)>;
  explicit FunctionProvider(Fn fn, std::string name = "function") : fn_(std::move(fn)), name_(std::move(name)) {}
  std::string complete(const CompletionRequest& request) override { return fn_(request); }
  std::string id() const override { return name_; }

 private:
  Fn fn_;
  std::string name_;
};

}  // namespace codefb::llm
