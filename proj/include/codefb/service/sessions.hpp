#pragma once

#include <fcntl.h>
#include <unistd.h>

#include <chrono>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <random>
#include <shared_mutex>
#include <stdexcept>
#include <string>
#include <system_error>
#include <vector>

#include <nlohmann/json.hpp>

#include "codefb/core/jsonl.hpp"
#include "codefb/refine/engine.hpp"

namespace codefb::service {

using nlohmann::json;

enum class SessionStatus { AwaitingUser, Generating, Executing, Closed };

inline std::string_view to_string(SessionStatus s) {
  switch (s) {
    case SessionStatus::AwaitingUser: return "AwaitingUser";
    case SessionStatus::Generating: return "Generating";
    case SessionStatus::Executing: return "Executing";
    case SessionStatus::Closed: return "Closed";
  }
  return "?";
}

struct SessionMessage {
  Message message;
  std::optional<FeedbackCategory> category;  // user turns only
  std::optional<ExecStatus> outcome;         // execution turns only
};

struct SessionConfig {
  int max_iterations = 3;
  Millis wall_timeout{10'000};
};

struct LastOutcome {
  ExecStatus status = ExecStatus::Pass;
  std::string stdout_text;
  std::string stderr_text;
  std::optional<Mismatch> mismatch;
};

struct SessionState {
  std::string session_id;
  std::vector<SessionMessage> messages;
  int round_counter = 0;  // rounds spent on the latest user turn
  SessionConfig config;
  SessionStatus status = SessionStatus::AwaitingUser;
  std::string created_at;
  std::string updated_at;
  std::optional<LastOutcome> last_outcome;
  std::string last_error;

  Dialogue dialogue() const {
    Dialogue d;
    d.id = session_id;
    for (const auto& m : messages) d.messages.push_back(m.message);
    return d;
  }
};

inline std::string utc_now() {
  auto now = std::chrono::system_clock::now();
  auto t = std::chrono::system_clock::to_time_t(now);
  auto ms = std::chrono::duration_cast<std::chrono::milliseconds>(now.time_since_epoch()).count() % 1000;
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[64];
  std::snprintf(buf, sizeof buf, "%04d-%02d-%02dT%02d:%02d:%02d.%03dZ", tm.tm_year + 1900, tm.tm_mon + 1, tm.tm_mday,
                tm.tm_hour, tm.tm_min, tm.tm_sec, static_cast<int>(ms));
  return buf;
}

inline json outcome_to_json(const LastOutcome& o) {
  json j{{"status", to_string(o.status)}, {"stdout", o.stdout_text}, {"stderr", o.stderr_text}};
  if (o.mismatch)
    j["mismatch"] = {{"test_input", o.mismatch->test_input}, {"expected", o.mismatch->expected},
                     {"actual", o.mismatch->actual}};
  return j;
}

inline LastOutcome outcome_from_json(const json& j) {
  LastOutcome o;
  o.status = parse_exec_status(j.at("status").get<std::string>()).value();
  o.stdout_text = j.value("stdout", "");
  o.stderr_text = j.value("stderr", "");
  if (j.contains("mismatch")) {
    const auto& m = j["mismatch"];
    o.mismatch = Mismatch{m.at("test_input"), m.at("expected"), m.at("actual")};
  }
  return o;
}

inline json state_to_json(const SessionState& s) {
  json msgs = json::array();
  for (const auto& m : s.messages) {
    json j{{"role", to_string(m.message.role())}, {"content", m.message.content()}};
    if (m.category) j["feedback_category"] = to_string(*m.category);
    if (m.outcome) j["outcome"] = to_string(*m.outcome);
    msgs.push_back(j);
  }
  json j{{"session_id", s.session_id},
         {"status", to_string(s.status)},
         {"round_counter", s.round_counter},
         {"config", {{"max_iterations", s.config.max_iterations}, {"wall_timeout_ms", s.config.wall_timeout.count()}}},
         {"created_at", s.created_at},
         {"updated_at", s.updated_at},
         {"messages", msgs}};
  j["last_outcome"] = s.last_outcome ? outcome_to_json(*s.last_outcome) : json(nullptr);
  if (!s.last_error.empty()) j["last_error"] = s.last_error;
  return j;
}

/// Applies one logged event. The state is exactly the fold of its log.
inline void apply_event(SessionState& s, const json& e) {
  const auto type = e.at("type").get<std::string>();
  s.updated_at = e.value("at", s.updated_at);
  if (type == "created") {
    s.session_id = e.at("session_id").get<std::string>();
    s.config.max_iterations = e.at("max_iterations").get<int>();
    s.config.wall_timeout = Millis(e.at("wall_timeout_ms").get<long long>());
    s.created_at = e.value("at", "");
    s.status = SessionStatus::AwaitingUser;
  } else if (type == "turn_started") {
    s.status = SessionStatus::Generating;
    s.last_error.clear();
  } else if (type == "message") {
    auto role = parse_role(e.at("role").get<std::string>()).value();
    SessionMessage m{Message(role, e.at("content").get<std::string>()), std::nullopt, std::nullopt};
    if (e.contains("feedback_category")) m.category = parse_feedback_category(e["feedback_category"].get<std::string>());
    if (e.contains("outcome")) m.outcome = parse_exec_status(e["outcome"].get<std::string>());
    s.messages.push_back(std::move(m));
  } else if (type == "turn_finished") {
    s.round_counter = e.at("rounds").get<int>();
    if (e.contains("last_outcome") && !e["last_outcome"].is_null()) s.last_outcome = outcome_from_json(e["last_outcome"]);
    s.status = SessionStatus::AwaitingUser;
  } else if (type == "turn_failed") {
    s.last_error = e.at("error").get<std::string>();
    s.status = SessionStatus::AwaitingUser;
  } else if (type == "closed") {
    s.status = SessionStatus::Closed;
  }
}

/// One append-only JSONL log per session. Each append is fsync'd before it
/// returns.
class EventLog {
 public:
  explicit EventLog(std::filesystem::path path) : path_(std::move(path)) {
    drop_torn_tail(path_);
    fd_ = ::open(path_.c_str(), O_WRONLY | O_CREAT | O_APPEND | O_CLOEXEC, 0644);
    if (fd_ < 0) throw std::system_error(errno, std::generic_category(), "open " + path_.string());
  }
  ~EventLog() {
    if (fd_ >= 0) ::close(fd_);
  }
  EventLog(const EventLog&) = delete;
  EventLog& operator=(const EventLog&) = delete;

  void append(const json& e) {
    auto line = e.dump(-1, ' ', false, json::error_handler_t::replace) + "\n";
    const char* p = line.data();
    std::size_t left = line.size();
    while (left > 0) {
      auto n = ::write(fd_, p, left);
      if (n < 0) {
        if (errno == EINTR) continue;
        throw std::system_error(errno, std::generic_category(), "write " + path_.string());
      }
      p += n;
      left -= static_cast<std::size_t>(n);
    }
    if (::fsync(fd_) != 0) throw std::system_error(errno, std::generic_category(), "fsync " + path_.string());
  }

  /// Cuts a final line that never got its newline, so new events start clean.
  static void drop_torn_tail(const std::filesystem::path& path) {
    std::error_code ec;
    auto size = std::filesystem::file_size(path, ec);
    if (ec || size == 0) return;
    std::ifstream in(path, std::ios::binary);
    std::string data((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    if (data.back() == '\n') return;
    auto keep = data.rfind('\n');
    std::filesystem::resize_file(path, keep == std::string::npos ? 0 : keep + 1);
  }

  /// Events in order. A torn final line (crash mid-write) is ignored.
  static std::vector<json> read(const std::filesystem::path& path) {
    std::vector<json> out;
    std::ifstream in(path);
    std::string line;
    while (std::getline(in, line)) {
      if (util::trim(line).empty()) continue;
      auto j = json::parse(line, nullptr, false);
      if (j.is_discarded()) break;
      out.push_back(std::move(j));
    }
    return out;
  }

 private:
  std::filesystem::path path_;
  int fd_ = -1;
};

}  // namespace codefb::service
