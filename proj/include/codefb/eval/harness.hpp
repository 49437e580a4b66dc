#pragma once

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <iomanip>
#include <map>
#include <optional>
#include <ostream>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "codefb/core/task.hpp"
#include "codefb/llm/provider.hpp"
#include "codefb/llm/templates.hpp"
#include "codefb/sandbox/executor.hpp"
#include "codefb/util/parallel.hpp"

namespace codefb::eval {

enum class Scenario { ExecutionFeedback, SynthHumanFeedback, SynthHumanFeedbackOracle };

inline std::string_view to_string(Scenario s) {
  switch (s) {
    case Scenario::ExecutionFeedback: return "exec-feedback";
    case Scenario::SynthHumanFeedback: return "human-feedback";
    case Scenario::SynthHumanFeedbackOracle: return "human-feedback-oracle";
  }
  return "?";
}

inline std::optional<Scenario> parse_scenario(std::string_view s) {
  for (auto sc : {Scenario::ExecutionFeedback, Scenario::SynthHumanFeedback, Scenario::SynthHumanFeedbackOracle}) {
    if (to_string(sc) == s) return sc;
  }
  return std::nullopt;
}

/// Runnable code from a completion: same-language fenced blocks joined in
/// order, or the whole text when it has no fence at all. When the task names
/// an entry point the code does not define, the prompt is put in front, as a
/// completion-only reply would need.
inline std::string sanitize(std::string_view completion, const TaskSpec& task) {
  auto blocks = extract_code_blocks(completion);
  std::string code = blocks.empty() ? std::string(completion) : select_code(blocks, task.language);
  if (code.empty()) return code;
  if (task.entry_point && canonical_language(task.language) == "python" &&
      !util::contains(code, "def " + *task.entry_point + "(") && util::contains(task.prompt, "def " + *task.entry_point + "(")) {
    code = task.prompt + code;
  }
  return code;
}

inline std::string eval_prompt(const TaskSpec& t) {
  auto id = t.kind == PromptKind::MBPP ? llm::TemplateId::EvalMBPP : llm::TemplateId::EvalHumanEval;
  return llm::render(id, {{"language", t.language}, {"original prompt", t.prompt}});
}

class SuiteError : public std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Reads a suite and, unless told otherwise, checks every canonical solution
/// against its own tests.
inline std::vector<TaskSpec> load_suite(const std::filesystem::path& path, const Executor* self_check,
                                        const ExecutionLimits& limits = {}, std::size_t jobs = 1) {
  auto tasks = read_jsonl_as<TaskSpec>(path, task_from_json);
  std::set<std::string> ids;
  for (const auto& t : tasks) {
    if (!ids.insert(t.id).second) throw SuiteError("duplicate task id '" + t.id + "' in " + path.string());
  }
  if (self_check) {
    auto outcomes = util::parallel_map(tasks, jobs, [&](const TaskSpec& t) {
      return run_task_tests(*self_check, t, t.canonical_solution, limits);
    });
    for (std::size_t i = 0; i < tasks.size(); ++i) {
      if (outcomes[i].status != ExecStatus::Pass)
        throw SuiteError("canonical solution of '" + tasks[i].id + "' fails its tests (" +
                         std::string(to_string(outcomes[i].status)) + "): " + feedback_body(outcomes[i]));
    }
  }
  return tasks;
}

struct TaskRow {
  std::string id;
  bool passed = false;
  std::optional<int> passed_round;
  ExecStatus status = ExecStatus::ExceptionRaised;
  int rounds = 0;
  std::string error;  // provider failure, if any
};

struct EvalConfig {
  ExecutionLimits limits;
  int max_rounds = 2;
  Scenario scenario = Scenario::ExecutionFeedback;
  std::size_t jobs = 1;
};

inline double pass_at_1(const std::vector<bool>& passed) {
  if (passed.empty()) throw std::invalid_argument("pass@1 of zero tasks");
  auto n = std::count(passed.begin(), passed.end(), true);
  return static_cast<double>(n) / static_cast<double>(passed.size());
}

struct EvalReport {
  std::vector<TaskRow> rows;  // by task id
  int max_rounds = 1;
  Scenario scenario = Scenario::ExecutionFeedback;
  std::string provider_id;
  std::string feedback_provider_id;

  /// pass@1 counting tasks solved by round r (1-based).
  double pass_at_round(int r) const {
    std::vector<bool> p;
    for (const auto& row : rows) p.push_back(row.passed_round && *row.passed_round <= r);
    return pass_at_1(p);
  }
  double single_turn() const { return pass_at_round(1); }
  double final_pass() const { return pass_at_round(max_rounds); }

  std::map<ExecStatus, std::size_t> failures() const {
    std::map<ExecStatus, std::size_t> f;
    for (const auto& row : rows) {
      if (!row.passed) ++f[row.status];
    }
    return f;
  }
};

inline std::string fixed3(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3f", v);
  return buf;
}

inline nlohmann::json report_to_json(const EvalReport& r) {
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& row : r.rows) {
    nlohmann::json j{{"id", row.id}, {"passed", row.passed}, {"status", to_string(row.status)}, {"rounds", row.rounds}};
    j["passed_round"] = row.passed_round ? nlohmann::json(*row.passed_round) : nlohmann::json(nullptr);
    if (!row.error.empty()) j["error"] = row.error;
    rows.push_back(j);
  }
  nlohmann::json per_round = nlohmann::json::array();
  for (int k = 1; k <= r.max_rounds; ++k) per_round.push_back(r.pass_at_round(k));
  nlohmann::json fails = nlohmann::json::object();
  for (auto s : {ExecStatus::ExceptionRaised, ExecStatus::OutputMismatch, ExecStatus::Timeout}) {
    auto f = r.failures();
    fails[std::string(to_string(s))] = f.count(s) ? f.at(s) : 0;
  }
  return {{"config", {{"scenario", to_string(r.scenario)}, {"max_rounds", r.max_rounds},
                      {"provider", r.provider_id}, {"feedback_provider", r.feedback_provider_id}}},
          {"tasks", r.rows.size()},
          {"pass_at_1", r.single_turn()},
          {"pass_at_1_final", r.final_pass()},
          {"pass_at_1_by_round", per_round},
          {"failures", fails},
          {"rows", rows}};
}

inline void print_report(std::ostream& os, const EvalReport& r) {
  os << "scenario: " << to_string(r.scenario) << "  provider: " << r.provider_id << "  tasks: " << r.rows.size() << "\n";
  os << std::left << std::setw(24) << "task" << std::setw(8) << "passed" << std::setw(8) << "round" << "status\n";
  for (const auto& row : r.rows) {
    os << std::left << std::setw(24) << row.id << std::setw(8) << (row.passed ? "yes" : "no") << std::setw(8)
       << (row.passed_round ? std::to_string(*row.passed_round) : "-") << to_string(row.status);
    if (!row.error.empty()) os << "  (" << row.error << ")";
    os << "\n";
  }
  for (int k = 1; k <= r.max_rounds; ++k) os << "pass@1 round " << k << ": " << fixed3(r.pass_at_round(k)) << "\n";
}

namespace detail {

inline std::string feedback_for(const TaskSpec& task, const std::string& code, const ExecutionOutcome& outcome,
                                Scenario scenario, llm::Provider* feedback_provider) {
  auto exec_text = format_feedback_message(outcome).content();
  if (scenario == Scenario::ExecutionFeedback) return exec_text;
  llm::Bindings b{{"original prompt", task.prompt}, {"sanitized code", code}, {"execution result", exec_text}};
  auto id = llm::TemplateId::MimicFeedbackNoOracle;
  if (scenario == Scenario::SynthHumanFeedbackOracle) {
    id = llm::TemplateId::MimicFeedbackWithOracle;
    b["canonical solution"] = task.canonical_solution;
  }
  llm::CompletionRequest req;
  req.messages.push_back({"user", llm::render(id, b)});
  return llm::complete(*feedback_provider, req);
}

inline TaskRow run_task(const TaskSpec& task, llm::Provider& provider, llm::Provider* feedback_provider,
                        const Executor& ex, const EvalConfig& cfg) {
  TaskRow row;
  row.id = task.id;
  llm::CompletionRequest req;
  req.messages.push_back({"user", eval_prompt(task)});
  try {
    for (int round = 1; round <= cfg.max_rounds; ++round) {
      auto reply = llm::complete(provider, req);
      row.rounds = round;
      auto code = sanitize(reply, task);
      auto outcome = util::trim(code).empty() ? ExecutionOutcome::exception(std::string(kNoCodeNotice))
                                              : run_task_tests(ex, task, code, cfg.limits);
      row.status = outcome.status;
      if (outcome.status == ExecStatus::Pass) {
        row.passed = true;
        row.passed_round = round;
        break;
      }
      if (round == cfg.max_rounds) break;
      req.messages.push_back({"assistant", reply});
      req.messages.push_back({"user", feedback_for(task, code, outcome, cfg.scenario, feedback_provider)});
    }
  } catch (const llm::ProviderError& e) {
    row.passed = false;
    row.passed_round.reset();
    row.error = e.what();
  }
  return row;
}

}  // namespace detail

/// Up to max_rounds generations per task; after a failure the scenario's
/// feedback is appended and the model asked again. max_rounds = 1 is the
/// single-turn evaluation.
inline EvalReport run_multi_turn(const std::vector<TaskSpec>& suite, llm::Provider& provider, const Executor& ex,
                                 const EvalConfig& cfg, llm::Provider* feedback_provider = nullptr) {
  if (cfg.max_rounds < 1) throw std::invalid_argument("max_rounds must be >= 1");
  if (suite.empty()) throw std::invalid_argument("empty suite");
  if (cfg.scenario != Scenario::ExecutionFeedback && cfg.max_rounds > 1 && !feedback_provider)
    throw std::invalid_argument("scenario " + std::string(to_string(cfg.scenario)) + " needs a feedback provider");
  std::vector<const TaskSpec*> order;
  for (const auto& t : suite) order.push_back(&t);
  std::sort(order.begin(), order.end(), [](auto a, auto b) { return a->id < b->id; });

  EvalReport r;
  r.max_rounds = cfg.max_rounds;
  r.scenario = cfg.scenario;
  r.provider_id = provider.id();
  if (feedback_provider && cfg.scenario != Scenario::ExecutionFeedback) r.feedback_provider_id = feedback_provider->id();
  r.rows = util::parallel_map(order, cfg.jobs, [&](const TaskSpec* t) {
    return detail::run_task(*t, provider, feedback_provider, ex, cfg);
  });
  return r;
}

inline EvalReport run_single_turn(const std::vector<TaskSpec>& suite, llm::Provider& provider, const Executor& ex,
                                  EvalConfig cfg) {
  cfg.max_rounds = 1;
  return run_multi_turn(suite, provider, ex, cfg);
}

}  // namespace codefb::eval
