#pragma once

#include <array>
#include <cstddef>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "codefb/sandbox/fences.hpp"

namespace codefb {

/// Every execution-feedback message starts with this exact prefix.
inline constexpr std::string_view kExecutionPrefix = "Execution result: ";

enum class Role { User, Assistant, ExecutionFeedback };

inline std::string_view to_string(Role r) {
  switch (r) {
    case Role::User: return "user";
    case Role::Assistant: return "assistant";
    case Role::ExecutionFeedback: return "execution";
  }
  return "?";
}

inline std::optional<Role> parse_role(std::string_view s) {
  if (s == "user") return Role::User;
  if (s == "assistant") return Role::Assistant;
  if (s == "execution") return Role::ExecutionFeedback;
  return std::nullopt;
}

class Message {
 public:
  Message(Role role, std::string content)
      : role_(role), content_(std::move(content)), blocks_(extract_code_blocks(content_)) {}

  static Message user(std::string text) { return {Role::User, std::move(text)}; }
  static Message assistant(std::string text) { return {Role::Assistant, std::move(text)}; }
  /// Prepends the execution prefix to `body`.
  static Message execution(std::string_view body) {
    return {Role::ExecutionFeedback, std::string(kExecutionPrefix) + std::string(body)};
  }

  Role role() const { return role_; }
  const std::string& content() const { return content_; }
  const std::vector<CodeBlock>& code_blocks() const { return blocks_; }

  friend bool operator==(const Message& a, const Message& b) {
    return a.role_ == b.role_ && a.content_ == b.content_;
  }

 private:
  Role role_;
  std::string content_;
  std::vector<CodeBlock> blocks_;
};

struct Dialogue {
  std::string id;
  std::vector<Message> messages;

  std::size_t count(Role r) const {
    std::size_t n = 0;
    for (const auto& m : messages) n += m.role() == r;
    return n;
  }

  friend bool operator==(const Dialogue&, const Dialogue&) = default;
};

enum class Method { SingleTurnPacking, InteractionSimulation, CodeCorrection, LeetCodeSimilar, LeetCodeFollowUp };

inline constexpr std::array<Method, 5> kAllMethods = {
    Method::SingleTurnPacking, Method::InteractionSimulation, Method::CodeCorrection,
    Method::LeetCodeSimilar, Method::LeetCodeFollowUp};

inline std::string_view to_string(Method m) {
  switch (m) {
    case Method::SingleTurnPacking: return "single_turn_packing";
    case Method::InteractionSimulation: return "interaction_simulation";
    case Method::CodeCorrection: return "code_correction";
    case Method::LeetCodeSimilar: return "leetcode_similar";
    case Method::LeetCodeFollowUp: return "leetcode_followup";
  }
  return "?";
}

inline std::optional<Method> parse_method(std::string_view s) {
  for (auto m : kAllMethods) {
    if (to_string(m) == s) return m;
  }
  return std::nullopt;
}

struct FeedbackFlags {
  bool exec;
  bool human;
  friend bool operator==(const FeedbackFlags&, const FeedbackFlags&) = default;
};

/// Which feedback kinds each construction method carries.
inline constexpr FeedbackFlags flags_for(Method m) {
  switch (m) {
    case Method::SingleTurnPacking: return {false, true};
    case Method::InteractionSimulation: return {true, true};
    case Method::CodeCorrection: return {true, false};
    case Method::LeetCodeSimilar:
    case Method::LeetCodeFollowUp: return {false, true};
  }
  return {false, false};
}

struct PackedSample {
  Dialogue dialogue;
  Method method = Method::SingleTurnPacking;
  std::vector<std::string> source_ids;

  bool has_exec_feedback() const { return flags_for(method).exec; }
  bool has_human_feedback() const { return flags_for(method).human; }

  friend bool operator==(const PackedSample&, const PackedSample&) = default;
};

enum class FeedbackCategory {
  SyntaxAndFormatting,
  Efficiency,
  FunctionalityEnhancements,
  ClarityAndDocumentation,
  BugIdentification,
  SecurityImprovements,
  CompatibilityAndTesting,
  ResourceOptimization,
  Scalability,
  BestPractices,
};

inline constexpr std::array<FeedbackCategory, 10> kAllFeedbackCategories = {
    FeedbackCategory::SyntaxAndFormatting,   FeedbackCategory::Efficiency,
    FeedbackCategory::FunctionalityEnhancements, FeedbackCategory::ClarityAndDocumentation,
    FeedbackCategory::BugIdentification,     FeedbackCategory::SecurityImprovements,
    FeedbackCategory::CompatibilityAndTesting, FeedbackCategory::ResourceOptimization,
    FeedbackCategory::Scalability,           FeedbackCategory::BestPractices};

/// Wire name (also what the UI sends).
inline std::string_view to_string(FeedbackCategory c) {
  switch (c) {
    case FeedbackCategory::SyntaxAndFormatting: return "SyntaxAndFormatting";
    case FeedbackCategory::Efficiency: return "Efficiency";
    case FeedbackCategory::FunctionalityEnhancements: return "FunctionalityEnhancements";
    case FeedbackCategory::ClarityAndDocumentation: return "ClarityAndDocumentation";
    case FeedbackCategory::BugIdentification: return "BugIdentification";
    case FeedbackCategory::SecurityImprovements: return "SecurityImprovements";
    case FeedbackCategory::CompatibilityAndTesting: return "CompatibilityAndTesting";
    case FeedbackCategory::ResourceOptimization: return "ResourceOptimization";
    case FeedbackCategory::Scalability: return "Scalability";
    case FeedbackCategory::BestPractices: return "BestPractices";
  }
  return "?";
}

/// Heading used for the category in the simulator's system prompt.
inline std::string_view display_name(FeedbackCategory c) {
  switch (c) {
    case FeedbackCategory::SyntaxAndFormatting: return "Syntax and Formatting";
    case FeedbackCategory::Efficiency: return "Efficiency";
    case FeedbackCategory::FunctionalityEnhancements: return "Functionality Enhancements";
    case FeedbackCategory::ClarityAndDocumentation: return "Code Clarity and Documentation";
    case FeedbackCategory::BugIdentification: return "Bug Identification";
    case FeedbackCategory::SecurityImprovements: return "Security Improvements";
    case FeedbackCategory::CompatibilityAndTesting: return "Compatibility and Testing";
    case FeedbackCategory::ResourceOptimization: return "Resource Optimization";
    case FeedbackCategory::Scalability: return "Scalability";
    case FeedbackCategory::BestPractices: return "Adherence to Best Practices";
  }
  return "?";
}

inline std::optional<FeedbackCategory> parse_feedback_category(std::string_view s) {
  for (auto c : kAllFeedbackCategories) {
    if (to_string(c) == s) return c;
  }
  return std::nullopt;
}

enum class ErrorSeedKind { SyntaxError, LogicalError, TypeError, NameError, TimeoutError };

inline constexpr std::array<ErrorSeedKind, 5> kAllErrorSeedKinds = {
    ErrorSeedKind::SyntaxError, ErrorSeedKind::LogicalError, ErrorSeedKind::TypeError,
    ErrorSeedKind::NameError, ErrorSeedKind::TimeoutError};

inline std::string_view to_string(ErrorSeedKind k) {
  switch (k) {
    case ErrorSeedKind::SyntaxError: return "Syntax Error";
    case ErrorSeedKind::LogicalError: return "Logical Error";
    case ErrorSeedKind::TypeError: return "Type Error";
    case ErrorSeedKind::NameError: return "Name Error";
    case ErrorSeedKind::TimeoutError: return "Timeout Error";
  }
  return "?";
}

}  // namespace codefb
