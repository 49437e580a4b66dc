#pragma once

#include <chrono>
#include <cstddef>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>

#include "codefb/core/types.hpp"

namespace codefb {

using Millis = std::chrono::milliseconds;

struct ExecutionLimits {
  Millis wall_timeout{10'000};
  std::size_t max_output_bytes = 64 * 1024;
  /// Parent for per-run temp dirs; empty means the system temp dir.
  std::filesystem::path work_root;
  bool keep_artifacts = false;

  void check() const {
    if (wall_timeout.count() <= 0) throw std::invalid_argument("wall_timeout must be positive");
    if (max_output_bytes == 0) throw std::invalid_argument("max_output_bytes must be positive");
  }
};

enum class ExecStatus { Pass, ExceptionRaised, OutputMismatch, Timeout };

inline std::string_view to_string(ExecStatus s) {
  switch (s) {
    case ExecStatus::Pass: return "pass";
    case ExecStatus::ExceptionRaised: return "exception";
    case ExecStatus::OutputMismatch: return "mismatch";
    case ExecStatus::Timeout: return "timeout";
  }
  return "?";
}

inline std::optional<ExecStatus> parse_exec_status(std::string_view s) {
  for (auto st : {ExecStatus::Pass, ExecStatus::ExceptionRaised, ExecStatus::OutputMismatch, ExecStatus::Timeout}) {
    if (to_string(st) == s) return st;
  }
  return std::nullopt;
}

struct Mismatch {
  std::string test_input;
  std::string expected;
  std::string actual;
  friend bool operator==(const Mismatch&, const Mismatch&) = default;
};

struct ExecutionOutcome {
  ExecStatus status = ExecStatus::Pass;
  std::string stdout_text;
  std::string stderr_text;
  Millis duration{0};
  std::optional<Mismatch> mismatch;  // present iff status == OutputMismatch
  int exit_code = 0;

  static ExecutionOutcome exception(std::string diagnostic) {
    ExecutionOutcome o;
    o.status = ExecStatus::ExceptionRaised;
    o.stderr_text = std::move(diagnostic);
    o.exit_code = -1;
    return o;
  }
};

inline constexpr std::string_view kTimeoutNotice = "Execution timed out";
inline constexpr std::string_view kNoCodeNotice = "No code block found.";

/// Body of the feedback message for an outcome, without the prefix.
inline std::string feedback_body(const ExecutionOutcome& o) {
  switch (o.status) {
    case ExecStatus::Pass:
      return o.stdout_text;
    case ExecStatus::ExceptionRaised:
      if (!o.stderr_text.empty()) return o.stderr_text;
      return "Process exited with status " + std::to_string(o.exit_code);
    case ExecStatus::OutputMismatch: {
      const auto& m = *o.mismatch;
      return "Test input: " + m.test_input + "\nExpected output: " + m.expected + "\nActual output: " + m.actual;
    }
    case ExecStatus::Timeout:
      return std::string(kTimeoutNotice);
  }
  return {};
}

inline Message format_feedback_message(const ExecutionOutcome& o) { return Message::execution(feedback_body(o)); }

class UnsupportedLanguage : public std::runtime_error {
 public:
  explicit UnsupportedLanguage(const std::string& tag)
      : std::runtime_error("unsupported language: '" + tag + "'"), tag_(tag) {}
  const std::string& tag() const { return tag_; }

 private:
  std::string tag_;
};

}  // namespace codefb
