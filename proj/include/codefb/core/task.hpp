#pragma once

#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "codefb/core/jsonl.hpp"
#include "codefb/sandbox/executor.hpp"

namespace codefb {

/// Which evaluation prompt a task is posed with.
enum class PromptKind { HumanEval, MBPP };

/// A benchmark problem. Tests are either (input, expected) cases or one
/// assert-style script appended to the solution.
struct TaskSpec {
  std::string id;
  std::string prompt;
  std::string language = "python";
  std::string canonical_solution;
  std::vector<TestCase> tests;
  std::string test_script;
  std::optional<std::string> entry_point;
  TestStyle style = TestStyle::Stdio;
  PromptKind kind = PromptKind::HumanEval;

  bool has_tests() const { return !tests.empty() || !test_script.empty(); }
};

inline ExecutionOutcome run_task_tests(const Executor& ex, const TaskSpec& task, std::string_view source,
                                       const ExecutionLimits& limits) {
  if (!task.test_script.empty()) return ex.run_script(source, task.language, task.test_script, limits);
  return ex.run_tests(source, task.language, task.tests, limits, task.style);
}

inline json task_to_json(const TaskSpec& t) {
  json j{{"id", t.id}, {"prompt", t.prompt}, {"language", t.language}, {"canonical_solution", t.canonical_solution}};
  if (!t.test_script.empty()) {
    j["test_script"] = t.test_script;
  } else {
    json tests = json::array();
    for (const auto& tc : t.tests) tests.push_back({{"input", tc.input}, {"expected", tc.expected}});
    j["tests"] = tests;
  }
  if (t.entry_point) j["entry_point"] = *t.entry_point;
  j["style"] = t.style == TestStyle::Expression ? "expression" : "stdio";
  j["kind"] = t.kind == PromptKind::MBPP ? "mbpp" : "humaneval";
  return j;
}

inline TaskSpec task_from_json(const json& j) {
  TaskSpec t;
  t.id = detail::require_string(j, "id");
  t.prompt = detail::require_string(j, "prompt");
  t.language = canonical_language(detail::require_string(j, "language"));
  t.canonical_solution = detail::require_string(j, "canonical_solution");
  if (auto it = j.find("tests"); it != j.end()) {
    if (!it->is_array()) throw FieldError("tests", "expected an array");
    for (const auto& tc : *it) {
      if (!tc.is_object() || !tc.contains("input") || !tc.contains("expected"))
        throw FieldError("tests", "each test needs input and expected");
      t.tests.push_back({tc.at("input").get<std::string>(), tc.at("expected").get<std::string>()});
    }
  }
  if (auto it = j.find("test_script"); it != j.end()) {
    if (!it->is_string()) throw FieldError("test_script", "expected a string");
    t.test_script = it->get<std::string>();
  }
  if (!t.has_tests()) throw FieldError("tests", "task has no tests");
  if (auto it = j.find("entry_point"); it != j.end() && !it->is_null()) t.entry_point = it->get<std::string>();
  if (auto it = j.find("style"); it != j.end()) {
    auto s = it->get<std::string>();
    if (s == "expression") t.style = TestStyle::Expression;
    else if (s == "stdio") t.style = TestStyle::Stdio;
    else throw FieldError("style", "expected stdio or expression");
  }
  if (auto it = j.find("kind"); it != j.end()) {
    auto s = it->get<std::string>();
    if (s == "mbpp") t.kind = PromptKind::MBPP;
    else if (s == "humaneval") t.kind = PromptKind::HumanEval;
    else throw FieldError("kind", "expected humaneval or mbpp");
  }
  return t;
}

}  // namespace codefb
