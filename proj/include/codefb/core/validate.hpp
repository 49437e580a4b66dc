#pragma once

#include <string>
#include <vector>

#include "codefb/core/types.hpp"
#include "codefb/util/text.hpp"

namespace codefb {

struct Violation {
  std::size_t index;  // message index, or npos for dialogue-level problems
  std::string what;
  friend bool operator==(const Violation&, const Violation&) = default;
};

struct ValidationResult {
  std::vector<Violation> violations;
  bool ok() const { return violations.empty(); }
  bool mentions(std::string_view text) const {
    for (const auto& v : violations) {
      if (util::contains(v.what, text)) return true;
    }
    return false;
  }
};

enum class Completeness { Completed, InProgress };

/// Reports every broken dialogue invariant. In-progress dialogues (live
/// sessions) may lack an assistant turn or be empty.
inline ValidationResult validate_dialogue(const Dialogue& d, Completeness mode = Completeness::Completed) {
  constexpr auto npos = static_cast<std::size_t>(-1);
  ValidationResult r;
  const auto& msgs = d.messages;

  if (msgs.empty()) {
    if (mode == Completeness::Completed) r.violations.push_back({npos, "dialogue has no messages"});
    return r;
  }
  if (msgs.front().role() != Role::User) r.violations.push_back({0, "first message must be User"});

  for (std::size_t i = 0; i < msgs.size(); ++i) {
    const auto& m = msgs[i];
    if (m.content().empty()) r.violations.push_back({i, "content is empty"});
    if (m.role() == Role::ExecutionFeedback) {
      if (!util::starts_with(m.content(), kExecutionPrefix))
        r.violations.push_back({i, "missing Execution result: prefix"});
      if (i == 0 || msgs[i - 1].role() != Role::Assistant)
        r.violations.push_back({i, "execution feedback must directly follow an Assistant message"});
    }
    if (i > 0 && m.role() == Role::Assistant && msgs[i - 1].role() == Role::Assistant)
      r.violations.push_back({i, "two consecutive Assistant messages"});
  }

  if (mode == Completeness::Completed && d.count(Role::Assistant) == 0)
    r.violations.push_back({npos, "completed dialogue has no Assistant message"});
  return r;
}

/// Dialogue validation plus agreement between the method's feedback flags and
/// the content: methods without execution feedback carry no execution
/// messages; methods with it carry at least one.
inline ValidationResult validate_sample(const PackedSample& s) {
  auto r = validate_dialogue(s.dialogue);
  constexpr auto npos = static_cast<std::size_t>(-1);
  auto exec_messages = s.dialogue.count(Role::ExecutionFeedback);
  if (s.has_exec_feedback() && exec_messages == 0)
    r.violations.push_back({npos, "method requires execution feedback but none is present"});
  if (!s.has_exec_feedback() && exec_messages > 0)
    r.violations.push_back({npos, "method forbids execution feedback but some is present"});
  if (s.source_ids.empty()) r.violations.push_back({npos, "sample has no source ids"});
  return r;
}

}  // namespace codefb
