#pragma once

#include <optional>
#include <string>
#include <vector>

#include "codefb/llm/provider.hpp"
#include "codefb/llm/templates.hpp"
#include "codefb/pipeline/items.hpp"
#include "codefb/refine/engine.hpp"

namespace codefb::pipeline {

inline std::string seed_hint(ErrorSeedKind k) {
  return "Your code MUST contain a " + std::string(to_string(k)) + ".";
}

/// Phrases that only exist to provoke wrong code. None may survive into an
/// emitted sample.
inline std::vector<std::string> error_injection_markers() {
  return {
      "You MUST make mistakes",
      "MUST contain at least one of the following types of errors",
      "Do not tell me you are writing the wrong code",
      "Your code MUST contain a",
      "pretend you are writing the correct code",
  };
}

inline std::vector<std::string> injection_findings(const PackedSample& s) {
  std::vector<std::string> found;
  for (const auto& msg : s.dialogue.messages) {
    for (const auto& marker : error_injection_markers()) {
      if (util::contains(msg.content(), marker)) found.push_back(marker);
    }
  }
  return found;
}

struct CorrectionConfig {
  refine::LoopConfig fix_loop = [] {
    refine::LoopConfig c;
    c.max_iterations = 3;
    c.judge = refine::Judge::ExecutionDriven;
    c.system_prompt = std::string(llm::template_text(llm::TemplateId::ExecFeedbackSystem));
    return c;
  }();
};

struct CorrectionResult {
  std::optional<PackedSample> sample;
  std::string drop_reason;
  std::vector<ErrorSeedKind> kinds_tried;
};

inline ErrorSeedKind next_kind(ErrorSeedKind k) {
  return kAllErrorSeedKinds[(static_cast<std::size_t>(k) + 1) % kAllErrorSeedKinds.size()];
}

/// Deliberately wrong code, its diagnostic, then the repair. The stored first
/// turn is the plain query, so the provocation never reaches the dataset.
inline CorrectionResult generate_code_correction(const SingleTurnItem& item, llm::Provider& provider,
                                                 ErrorSeedKind seed_kind, const Executor& executor,
                                                 const CorrectionConfig& cfg = {}) {
  CorrectionResult res;
  const auto& limits = cfg.fix_loop.limits;
  const auto& lang = cfg.fix_loop.language;
  try {
    auto kind = seed_kind;
    for (int attempt = 0; attempt < 2; ++attempt, kind = next_kind(kind)) {
      res.kinds_tried.push_back(kind);
      llm::CompletionRequest req;
      req.messages.push_back({"system", std::string(llm::template_text(llm::TemplateId::DeliberateErrorSystem))});
      req.messages.push_back({"user", item.query + "\n\n" + seed_hint(kind)});
      auto wrong = llm::complete(provider, req);

      auto wrong_msg = Message::assistant(wrong);
      auto code = select_code(wrong_msg.code_blocks(), lang);
      if (code.empty()) continue;
      auto outcome = executor.execute(code, lang, limits);
      if (outcome.status == ExecStatus::Pass) continue;  // the bug did not show; try another kind

      Dialogue d;
      d.id = "fix-" + item.id;
      d.messages.push_back(Message::user(item.query));
      d.messages.push_back(std::move(wrong_msg));
      d.messages.push_back(format_feedback_message(outcome));

      refine::LoopContext ctx{provider, executor};
      ctx.trace_id = d.id;
      auto fixed = refine::run_execution_loop(d, cfg.fix_loop, ctx);
      if (!fixed.passed_round) {
        res.drop_reason = "repair did not pass within " + std::to_string(cfg.fix_loop.max_iterations) + " rounds";
        return res;
      }
      PackedSample s;
      s.dialogue = std::move(fixed.dialogue);
      s.method = Method::CodeCorrection;
      s.source_ids = {item.id};
      res.sample = std::move(s);
      return res;
    }
    res.drop_reason = "deliberately wrong code did not fail";
  } catch (const refine::LoopError& e) {
    res.drop_reason = std::string("provider failure: ") + e.what();
  } catch (const llm::ProviderError& e) {
    res.drop_reason = std::string("provider failure: ") + e.what();
  }
  return res;
}

/// Seed kinds cycle through the five error types by item position.
inline ErrorSeedKind seed_kind_for(std::size_t index) { return kAllErrorSeedKinds[index % kAllErrorSeedKinds.size()]; }

}  // namespace codefb::pipeline
