#pragma once

#include <map>
#include <ostream>
#include <string>

#include <nlohmann/json.hpp>

#include "codefb/core/types.hpp"
#include "codefb/core/validate.hpp"

namespace codefb {

struct MethodCounts {
  std::size_t samples = 0;
  std::size_t turns = 0;
  friend bool operator==(const MethodCounts&, const MethodCounts&) = default;
};

/// Per-method sample and turn counts. One turn is one Assistant message; an
/// execution-feedback message extends the turn it follows.
struct DatasetStats {
  std::map<Method, MethodCounts> per_method;
  std::size_t rejects = 0;
  std::map<std::string, std::size_t> languages;  // code blocks in assistant turns, by tag

  DatasetStats() {
    for (auto m : kAllMethods) per_method[m] = {};
  }

  std::size_t total_samples() const {
    std::size_t n = 0;
    for (const auto& [m, c] : per_method) n += c.samples;
    return n;
  }
  std::size_t total_turns() const {
    std::size_t n = 0;
    for (const auto& [m, c] : per_method) n += c.turns;
    return n;
  }

  void add(const PackedSample& s) {
    if (!validate_sample(s).ok()) {
      ++rejects;
      return;
    }
    auto& c = per_method[s.method];
    ++c.samples;
    c.turns += turn_count(s.dialogue);
    for (const auto& msg : s.dialogue.messages) {
      if (msg.role() != Role::Assistant) continue;
      for (const auto& b : msg.code_blocks()) ++languages[b.language.empty() ? "(none)" : canonical_language(b.language)];
    }
  }

  DatasetStats& operator+=(const DatasetStats& o) {
    for (const auto& [m, c] : o.per_method) {
      per_method[m].samples += c.samples;
      per_method[m].turns += c.turns;
    }
    rejects += o.rejects;
    for (const auto& [lang, n] : o.languages) languages[lang] += n;
    return *this;
  }

  static std::size_t turn_count(const Dialogue& d) { return d.count(Role::Assistant); }

  friend bool operator==(const DatasetStats&, const DatasetStats&) = default;
};

template <typename Range>
DatasetStats compute_stats(const Range& samples) {
  DatasetStats st;
  for (const auto& s : samples) st.add(s);
  return st;
}

inline nlohmann::json stats_to_json(const DatasetStats& st) {
  nlohmann::json methods = nlohmann::json::object();
  for (const auto& [m, c] : st.per_method)
    methods[std::string(to_string(m))] = {{"samples", c.samples}, {"turns", c.turns}};
  return {{"methods", methods},
          {"total_samples", st.total_samples()},
          {"total_turns", st.total_turns()},
          {"rejects", st.rejects},
          {"languages", st.languages}};
}

inline void print_stats_table(std::ostream& os, const DatasetStats& st) {
  auto pad = [](std::string_view s, std::size_t w) {
    std::string out(s);
    out.resize(std::max(out.size(), w), ' ');
    return out;
  };
  auto row = [&](std::string_view name, std::size_t samples, std::size_t turns) {
    os << pad(name, 24) << ' ' << pad(std::to_string(samples), 8) << ' ' << turns << '\n';
  };
  os << pad("method", 24) << ' ' << pad("samples", 8) << " turns\n";
  for (const auto& [m, c] : st.per_method) row(to_string(m), c.samples, c.turns);
  row("total", st.total_samples(), st.total_turns());
  os << "rejects " << st.rejects << '\n';
}

}  // namespace codefb
