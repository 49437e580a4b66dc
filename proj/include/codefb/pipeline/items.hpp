#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "codefb/core/jsonl.hpp"
#include "codefb/sandbox/fences.hpp"

namespace codefb::pipeline {

struct SingleTurnItem {
  std::string id;
  std::string query;
  std::string response;
  std::string source;
  friend bool operator==(const SingleTurnItem&, const SingleTurnItem&) = default;
};

struct Solution {
  std::string language;
  std::string complexity;  // free-form note such as "O(n log n)"; may be empty
  std::string code;
  friend bool operator==(const Solution&, const Solution&) = default;
};

struct TaggedProblem {
  std::string id;
  std::string statement;
  std::vector<Solution> solutions;
  std::vector<std::string> related_ids;
  friend bool operator==(const TaggedProblem&, const TaggedProblem&) = default;
};

inline json item_to_json(const SingleTurnItem& it) {
  return {{"id", it.id}, {"query", it.query}, {"response", it.response}, {"source", it.source}};
}

inline SingleTurnItem item_from_json(const json& j) {
  SingleTurnItem it;
  it.id = detail::require_string(j, "id");
  it.query = detail::require_string(j, "query");
  if (util::trim(it.query).empty()) throw FieldError("query", "empty");
  if (j.contains("response")) it.response = detail::require_string(j, "response");
  if (j.contains("source")) it.source = detail::require_string(j, "source");
  return it;
}

inline json problem_to_json(const TaggedProblem& p) {
  json sols = json::array();
  for (const auto& s : p.solutions)
    sols.push_back({{"language", s.language}, {"complexity", s.complexity}, {"code", s.code}});
  return {{"id", p.id}, {"statement", p.statement}, {"solutions", sols}, {"related_ids", p.related_ids}};
}

inline TaggedProblem problem_from_json(const json& j) {
  TaggedProblem p;
  p.id = detail::require_string(j, "id");
  p.statement = detail::require_string(j, "statement");
  const auto& sols = detail::require(j, "solutions");
  if (!sols.is_array() || sols.empty()) throw FieldError("solutions", "need at least one solution");
  for (const auto& s : sols) {
    Solution sol;
    sol.language = canonical_language(detail::require_string(s, "language"));
    if (s.contains("complexity")) sol.complexity = detail::require_string(s, "complexity");
    sol.code = detail::require_string(s, "code");
    p.solutions.push_back(std::move(sol));
  }
  p.related_ids = detail::string_list(j, "related_ids", false);
  return p;
}

inline std::vector<SingleTurnItem> read_items(const std::filesystem::path& path) {
  return read_jsonl_as<SingleTurnItem>(path, item_from_json);
}

inline std::vector<TaggedProblem> read_problems(const std::filesystem::path& path) {
  return read_jsonl_as<TaggedProblem>(path, problem_from_json);
}

}  // namespace codefb::pipeline
