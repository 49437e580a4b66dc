#pragma once

#include <optional>
#include <string>
#include <vector>

#include "codefb/llm/parsing.hpp"
#include "codefb/llm/provider.hpp"
#include "codefb/llm/templates.hpp"
#include "codefb/pipeline/items.hpp"
#include "codefb/util/parallel.hpp"

namespace codefb::pipeline {

struct ComplexityRating {
  int score = 0;
  llm::TemplateId prompt_used = llm::TemplateId::FilterPrompt1;
  std::string rationale;  // the raw reply
};

struct FilterConfig {
  int threshold = 4;
  /// Attempts per prompt before a malformed rating rejects the item.
  int attempts = 2;
  std::size_t jobs = 1;
};

struct RatedItem {
  SingleTurnItem item;
  std::vector<ComplexityRating> ratings;  // one per prompt that produced a score
  bool retained = false;
  std::string reject_reason;              // empty when retained
};

struct FilterResult {
  std::vector<RatedItem> rows;  // input order

  std::vector<SingleTurnItem> retained() const {
    std::vector<SingleTurnItem> out;
    for (const auto& r : rows) {
      if (r.retained) out.push_back(r.item);
    }
    return out;
  }
  std::size_t malformed() const {
    std::size_t n = 0;
    for (const auto& r : rows) n += util::starts_with(r.reject_reason, "malformed");
    return n;
  }
};

inline std::optional<ComplexityRating> rate(const SingleTurnItem& item, llm::TemplateId prompt, llm::Provider& provider,
                                            int attempts) {
  llm::CompletionRequest req;
  req.messages.push_back({"user", llm::render(prompt, {{"query", item.query}})});
  for (int a = 0; a < attempts; ++a) {
    auto reply = llm::complete(provider, req);
    try {
      return ComplexityRating{llm::parse_rating(reply), prompt, reply};
    } catch (const llm::MalformedRating&) {
    }
  }
  return std::nullopt;
}

/// An item survives only when both prompts rate it at or above the
/// threshold. Both prompts are always asked so every rating is on record.
inline FilterResult filter_queries(const std::vector<SingleTurnItem>& items, llm::Provider& provider,
                                   const FilterConfig& cfg = {}) {
  FilterResult out;
  out.rows = util::parallel_map(items, cfg.jobs, [&](const SingleTurnItem& item) {
    RatedItem row{item, {}, false, {}};
    bool ok = true;
    for (auto prompt : {llm::TemplateId::FilterPrompt1, llm::TemplateId::FilterPrompt2}) {
      auto r = rate(item, prompt, provider, cfg.attempts);
      if (!r) {
        ok = false;
        if (row.reject_reason.empty()) row.reject_reason = "malformed rating (" + std::string(llm::template_name(prompt)) + ")";
        continue;
      }
      if (r->score < cfg.threshold && row.reject_reason.empty()) {
        ok = false;
        row.reject_reason = "score " + std::to_string(r->score) + " under " + std::string(llm::template_name(prompt));
      }
      row.ratings.push_back(std::move(*r));
    }
    row.retained = ok;
    return row;
  });
  return out;
}

}  // namespace codefb::pipeline
