#pragma once

#include <filesystem>
#include <fstream>
#include <memory>
#include <mutex>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "codefb/core/task.hpp"
#include "codefb/core/types.hpp"
#include "codefb/llm/provider.hpp"
#include "codefb/sandbox/executor.hpp"
#include "codefb/sandbox/outcome.hpp"
#include "codefb/util/text.hpp"

namespace codefb::refine {

/// TestDriven: the task's tests decide. ModelDriven: execution must succeed and
/// a judge call must answer yes. ExecutionDriven: a clean run is enough (used
/// when there are no tests and no judge, e.g. live sessions).
enum class Judge { TestDriven, ModelDriven, ExecutionDriven };

inline std::string_view to_string(Judge j) {
  switch (j) {
    case Judge::TestDriven: return "test";
    case Judge::ModelDriven: return "model";
    case Judge::ExecutionDriven: return "execution";
  }
  return "?";
}

inline std::optional<Judge> parse_judge(std::string_view s) {
  for (auto j : {Judge::TestDriven, Judge::ModelDriven, Judge::ExecutionDriven}) {
    if (to_string(j) == s) return j;
  }
  return std::nullopt;
}

struct LoopConfig {
  int max_iterations = 3;
  Judge judge = Judge::TestDriven;
  ExecutionLimits limits;
  /// Keep the feedback message of a passing final round.
  bool record_final_pass = true;
  std::string system_prompt;
  std::string language = "python";

  void check() const {
    if (max_iterations < 1) throw std::invalid_argument("max_iterations must be >= 1");
    limits.check();
  }
};

struct LoopResult {
  Dialogue dialogue;
  int rounds_used = 0;
  ExecStatus final_status = ExecStatus::ExceptionRaised;
  std::optional<int> passed_round;
  std::vector<ExecutionOutcome> outcomes;  // one per round
};

/// A provider failed mid-loop; `partial` holds everything recorded so far.
class LoopError : public std::runtime_error {
 public:
  LoopError(const std::string& what, Dialogue partial, bool transport)
      : std::runtime_error(what), partial_(std::move(partial)), transport_(transport) {}
  const Dialogue& partial() const { return partial_; }
  bool transport() const { return transport_; }

 private:
  Dialogue partial_;
  bool transport_;
};

/// Receives loop events; implementations must be thread-safe.
class TraceSink {
 public:
  virtual ~TraceSink() = default;
  virtual void event(const nlohmann::json& e) = 0;
};

class JsonlTrace : public TraceSink {
 public:
  explicit JsonlTrace(const std::filesystem::path& path) : out_(path, std::ios::binary | std::ios::trunc) {
    if (!out_) throw std::runtime_error("cannot write trace " + path.string());
  }
  void event(const nlohmann::json& e) override {
    std::lock_guard lock(mu_);
    out_ << e.dump(-1, ' ', false, nlohmann::json::error_handler_t::replace) << '\n';
    out_.flush();
  }

 private:
  std::mutex mu_;
  std::ofstream out_;
};

class MemoryTrace : public TraceSink {
 public:
  void event(const nlohmann::json& e) override {
    std::lock_guard lock(mu_);
    events_.push_back(e);
  }
  std::vector<nlohmann::json> events() const {
    std::lock_guard lock(mu_);
    return events_;
  }

 private:
  mutable std::mutex mu_;
  std::vector<nlohmann::json> events_;
};

/// Completions from a trace, in order, as a script that reproduces the run.
inline std::unique_ptr<llm::ScriptedProvider> replay_provider(const std::vector<nlohmann::json>& events) {
  auto p = std::make_unique<llm::ScriptedProvider>();
  for (const auto& e : events) {
    if (e.value("event", "") == "completion") p->push(e.at("text").get<std::string>());
  }
  return p;
}

inline std::unique_ptr<llm::ScriptedProvider> replay_provider(const std::filesystem::path& trace) {
  std::vector<nlohmann::json> events;
  std::ifstream in(trace);
  if (!in) throw std::runtime_error("cannot open trace " + trace.string());
  std::string line;
  while (std::getline(in, line)) {
    if (!util::trim(line).empty()) events.push_back(nlohmann::json::parse(line));
  }
  return replay_provider(events);
}

inline constexpr std::string_view kJudgeQuestion =
    "Judging by the code and its execution result above, is the latest code a correct and complete solution? "
    "Answer yes or no.";

/// Everything a loop talks to. `initial`, when set, answers round 1 only.
/// `judge` defaults to `provider`.
struct LoopContext {
  LoopContext(llm::Provider& p, const Executor& ex) : provider(p), executor(ex) {}

  llm::Provider& provider;
  const Executor& executor;
  const TaskSpec* task = nullptr;
  llm::Provider* initial = nullptr;
  llm::Provider* judge = nullptr;
  TraceSink* trace = nullptr;
  llm::RetryPolicy retry{};
  std::string trace_id;
};

namespace detail {

inline nlohmann::json chat_json(const std::vector<llm::ChatMessage>& msgs) {
  auto arr = nlohmann::json::array();
  for (const auto& m : msgs) arr.push_back({{"role", m.role}, {"content", m.content}});
  return arr;
}

inline std::string ask(llm::Provider& p, const llm::CompletionRequest& req, const LoopContext& ctx,
                       const Dialogue& partial, std::string_view purpose, int round) {
  if (ctx.trace) {
    ctx.trace->event({{"event", "prompt"}, {"id", ctx.trace_id}, {"round", round}, {"purpose", purpose},
                      {"provider", p.id()}, {"messages", chat_json(req.messages)}});
  }
  try {
    auto text = llm::complete(p, req, ctx.retry);
    if (ctx.trace)
      ctx.trace->event({{"event", "completion"}, {"id", ctx.trace_id}, {"round", round}, {"purpose", purpose},
                        {"text", text}});
    return text;
  } catch (const llm::TransportError& e) {
    throw LoopError(e.what(), partial, true);
  } catch (const llm::ProviderError& e) {
    throw LoopError(e.what(), partial, false);
  }
}

inline bool judged_yes(std::string_view reply) {
  auto t = util::to_lower(util::trim(reply));
  auto start = t.find_first_not_of("*\"'`# ");
  return start != std::string::npos && t.compare(start, 3, "yes") == 0;
}

}  // namespace detail

/// generate -> extract -> run -> judge, repeated until a round is judged
/// correct or max_iterations rounds have been spent. The seed is copied, never
/// modified. A reply without code costs a round and is answered with
/// "Execution result: No code block found.".
inline LoopResult run_execution_loop(const Dialogue& seed, const LoopConfig& config, const LoopContext& ctx) {
  config.check();
  if (seed.messages.empty()) throw std::invalid_argument("seed dialogue is empty");
  if (seed.messages.back().role() == Role::Assistant)
    throw std::invalid_argument("seed dialogue must not end with an Assistant message");
  if (config.judge == Judge::TestDriven && (!ctx.task || !ctx.task->has_tests()))
    throw std::invalid_argument("test-driven judging needs a task with tests");

  LoopResult r;
  r.dialogue = seed;
  const std::string language = ctx.task ? ctx.task->language : config.language;

  for (int round = 1; round <= config.max_iterations; ++round) {
    llm::CompletionRequest req;
    req.messages = llm::to_chat(r.dialogue, config.system_prompt);
    auto& gen = (round == 1 && ctx.initial) ? *ctx.initial : ctx.provider;
    auto reply = detail::ask(gen, req, ctx, r.dialogue, "generate", round);
    if (util::trim(reply).empty()) reply = "(empty response)";
    r.dialogue.messages.push_back(Message::assistant(reply));
    r.rounds_used = round;

    auto code = select_code(r.dialogue.messages.back().code_blocks(), language);
    ExecutionOutcome outcome;
    if (code.empty()) {
      outcome = ExecutionOutcome::exception(std::string(kNoCodeNotice));
    } else if (config.judge == Judge::TestDriven) {
      outcome = run_task_tests(ctx.executor, *ctx.task, code, config.limits);
    } else {
      outcome = ctx.executor.execute(code, language, config.limits);
    }

    bool correct = outcome.status == ExecStatus::Pass;
    auto feedback = format_feedback_message(outcome);
    if (correct && config.judge == Judge::ModelDriven) {
      Dialogue probe = r.dialogue;
      probe.messages.push_back(feedback);
      llm::CompletionRequest jq;
      jq.messages = llm::to_chat(probe, config.system_prompt);
      jq.messages.push_back({"user", std::string(kJudgeQuestion)});
      auto& judge = ctx.judge ? *ctx.judge : ctx.provider;
      correct = detail::judged_yes(detail::ask(judge, jq, ctx, r.dialogue, "judge", round));
    }
    if (ctx.trace) {
      ctx.trace->event({{"event", "outcome"}, {"id", ctx.trace_id}, {"round", round},
                        {"status", to_string(outcome.status)}, {"accepted", correct},
                        {"feedback", feedback.content()}});
    }

    if (!correct || config.record_final_pass) r.dialogue.messages.push_back(feedback);
    r.final_status = outcome.status;
    r.outcomes.push_back(std::move(outcome));
    if (correct) {
      r.passed_round = round;
      break;
    }
  }
  // A clean run the judge rejected is reported as not meeting expectations.
  if (!r.passed_round && r.final_status == ExecStatus::Pass) r.final_status = ExecStatus::OutputMismatch;
  return r;
}

/// Appends the feedback as a new User turn; the last non-execution message
/// must be the Assistant's.
inline Dialogue inject_human_feedback(const Dialogue& d, std::string feedback_text) {
  const Message* last = nullptr;
  for (auto it = d.messages.rbegin(); it != d.messages.rend(); ++it) {
    if (it->role() != Role::ExecutionFeedback) {
      last = &*it;
      break;
    }
  }
  if (!last || last->role() != Role::Assistant)
    throw std::invalid_argument("human feedback must follow an Assistant turn");
  if (util::trim(feedback_text).empty()) throw std::invalid_argument("feedback text is empty");
  Dialogue out = d;
  out.messages.push_back(Message::user(std::move(feedback_text)));
  return out;
}

/// One more generate/execute cycle after a feedback turn, with the usual
/// execution-feedback retries up to the configured cap.
inline LoopResult run_feedback_round(const Dialogue& d, const LoopConfig& config, const LoopContext& ctx) {
  if (d.messages.empty() || d.messages.back().role() != Role::User)
    throw std::invalid_argument("feedback round needs a dialogue ending in a User message");
  return run_execution_loop(d, config, ctx);
}

}  // namespace codefb::refine
