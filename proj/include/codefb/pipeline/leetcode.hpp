#pragma once

#include <algorithm>
#include <map>
#include <numeric>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include "codefb/core/jsonl.hpp"
#include "codefb/llm/provider.hpp"
#include "codefb/llm/templates.hpp"
#include "codefb/pipeline/items.hpp"

namespace codefb::pipeline {

inline constexpr std::string_view kStockPreamble = "Here is my solution.";

struct EnrichResult {
  std::string text;
  bool fell_back = false;
};

inline std::string fence(std::string_view language, std::string_view code) {
  std::string out = "```";
  out += language;
  out += '\n';
  out += code;
  if (out.back() != '\n') out += '\n';
  out += "```";
  return out;
}

/// Explanation text followed by the untouched code. A reply that carries code
/// other than the original, or no text at all, falls back to a stock preamble.
inline EnrichResult enrich_solution(const Dialogue& so_far, std::string_view problem, const Solution& sol,
                                    llm::Provider* provider) {
  EnrichResult r;
  std::string explanation;
  if (provider) {
    json prev = json::array();
    for (const auto& m : so_far.messages) prev.push_back(message_to_json(m));
    llm::CompletionRequest req;
    req.messages.push_back(
        {"user", llm::render(llm::TemplateId::NlExplanation, {{"previous dialogues", prev.dump(2)},
                                                              {"recent problem", std::string(problem)},
                                                              {"code", sol.code}})});
    auto reply = llm::complete(*provider, req);
    auto blocks = extract_code_blocks(reply);
    bool altered = false;
    for (const auto& b : blocks) {
      if (util::trim_right(b.source) != util::trim_right(sol.code)) altered = true;
    }
    if (!altered) {
      // Keep only prose ahead of any echoed copy of the code.
      auto cut = reply.find("```");
      explanation = std::string(util::trim(std::string_view(reply).substr(0, cut)));
    } else {
      r.fell_back = true;
    }
  }
  if (explanation.empty()) {
    explanation = kStockPreamble;
    r.fell_back = r.fell_back || provider != nullptr;
  }
  r.text = explanation + "\n\n" + fence(sol.language, sol.code);
  return r;
}

struct LeetcodeStats {
  std::size_t enrich_fallbacks = 0;
};

namespace detail {

struct UnionFind {
  std::vector<std::size_t> parent;
  explicit UnionFind(std::size_t n) : parent(n) { std::iota(parent.begin(), parent.end(), 0); }
  std::size_t find(std::size_t x) {
    while (parent[x] != x) x = parent[x] = parent[parent[x]];
    return x;
  }
  void unite(std::size_t a, std::size_t b) {
    a = find(a);
    b = find(b);
    if (a != b) parent[std::max(a, b)] = std::min(a, b);
  }
};

}  // namespace detail

/// Connected components of the related-id graph with two or more members,
/// each posed in id order with its first solution as the answer.
inline std::vector<PackedSample> pack_leetcode_similar(std::vector<TaggedProblem> problems, llm::Provider* provider,
                                                       LeetcodeStats* stats = nullptr) {
  std::sort(problems.begin(), problems.end(), [](const auto& a, const auto& b) { return a.id < b.id; });
  std::map<std::string, std::size_t> index;
  for (std::size_t i = 0; i < problems.size(); ++i) {
    if (!index.emplace(problems[i].id, i).second) throw std::invalid_argument("duplicate problem id '" + problems[i].id + "'");
  }
  detail::UnionFind uf(problems.size());
  for (std::size_t i = 0; i < problems.size(); ++i) {
    for (const auto& rel : problems[i].related_ids) {
      auto it = index.find(rel);
      if (it == index.end())
        throw std::invalid_argument("problem '" + problems[i].id + "' references unknown id '" + rel + "'");
      uf.unite(i, it->second);
    }
  }
  std::map<std::size_t, std::vector<std::size_t>> groups;
  for (std::size_t i = 0; i < problems.size(); ++i) groups[uf.find(i)].push_back(i);

  std::vector<PackedSample> out;
  for (const auto& [root, members] : groups) {
    if (members.size() < 2) continue;
    PackedSample s;
    s.method = Method::LeetCodeSimilar;
    s.dialogue.id = "similar-" + problems[members.front()].id;
    for (auto i : members) {
      const auto& p = problems[i];
      s.source_ids.push_back(p.id);
      auto e = enrich_solution(s.dialogue, p.statement, p.solutions.front(), provider);
      s.dialogue.messages.push_back(Message::user(p.statement));
      if (stats && e.fell_back) ++stats->enrich_fallbacks;
      s.dialogue.messages.push_back(Message::assistant(e.text));
    }
    out.push_back(std::move(s));
  }
  return out;
}

inline std::string language_display(std::string_view tag) {
  static const std::map<std::string, std::string, std::less<>> names = {
      {"python", "Python"}, {"cpp", "C++"}, {"java", "Java"}, {"javascript", "JavaScript"},
      {"bash", "Bash"}, {"go", "Go"}, {"rust", "Rust"}, {"c", "C"}, {"csharp", "C#"}, {"typescript", "TypeScript"}};
  auto it = names.find(canonical_language(tag));
  return it == names.end() ? std::string(tag) : it->second;
}

/// Follow-up request for moving from `prev` to `next`.
inline std::string followup_request(const Solution& prev, const Solution& next) {
  if (canonical_language(prev.language) != canonical_language(next.language))
    return "Now implement the same solution in " + language_display(next.language) + ".";
  if (!next.complexity.empty() && next.complexity != prev.complexity)
    return "Can you make it run in " + next.complexity + "?";
  return "Can you solve it with a different approach?";
}

struct FollowupConfig {
  bool rephrase = false;  // ask the provider to reword each templated request
};

inline constexpr std::string_view kRephraseInstruction =
    "Rephrase the following follow-up request from a user to a programming assistant. "
    "Keep its meaning, mention the same language or complexity, and reply with the rephrased request only.\n\n";

/// A problem with several solutions becomes one dialogue that walks through
/// them, each later turn asking for the next variant.
inline std::vector<PackedSample> pack_leetcode_followup(std::vector<TaggedProblem> problems, llm::Provider* provider,
                                                        const FollowupConfig& cfg = {}, LeetcodeStats* stats = nullptr) {
  if (cfg.rephrase && !provider) throw std::invalid_argument("rephrasing needs a provider");
  std::sort(problems.begin(), problems.end(), [](const auto& a, const auto& b) { return a.id < b.id; });
  std::vector<PackedSample> out;
  for (const auto& p : problems) {
    if (p.solutions.size() < 2) continue;
    PackedSample s;
    s.method = Method::LeetCodeFollowUp;
    s.dialogue.id = "followup-" + p.id;
    s.source_ids = {p.id};
    for (std::size_t i = 0; i < p.solutions.size(); ++i) {
      std::string ask = i == 0 ? p.statement : followup_request(p.solutions[i - 1], p.solutions[i]);
      if (i > 0 && cfg.rephrase) {
        llm::CompletionRequest req;
        req.messages.push_back({"user", std::string(kRephraseInstruction) + ask});
        auto reworded = std::string(util::trim(llm::complete(*provider, req)));
        if (!reworded.empty()) ask = reworded;
      }
      auto e = enrich_solution(s.dialogue, ask, p.solutions[i], provider);
      s.dialogue.messages.push_back(Message::user(ask));
      if (stats && e.fell_back) ++stats->enrich_fallbacks;
      s.dialogue.messages.push_back(Message::assistant(e.text));
    }
    out.push_back(std::move(s));
  }
  return out;
}

}  // namespace codefb::pipeline
