#pragma once

#include <algorithm>
#include <cstdint>
#include <cstdio>
#include <iomanip>
#include <map>
#include <optional>
#include <ostream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include <nlohmann/json.hpp>

#include "codefb/util/text.hpp"

namespace codefb::leakage {

using Lines = std::vector<std::string>;

inline bool is_comment_only(std::string_view line) {
  return util::starts_with(line, "#") || util::starts_with(line, "//");
}

/// Lines trimmed on both sides, with blank and comment-only lines dropped.
/// Case is kept.
inline Lines normalize_lines(std::string_view code) {
  Lines out;
  for (auto raw : util::split_lines(code)) {
    auto line = util::trim(raw);
    if (line.empty() || is_comment_only(line)) continue;
    out.emplace_back(line);
  }
  return out;
}

struct LeakageConfig {
  std::vector<std::size_t> n_values{5, 6, 7};
  /// false: share of benchmark windows found in the dataset; true: the reverse.
  bool dataset_denominator = false;

  void check() const {
    if (n_values.empty()) throw std::invalid_argument("n_values is empty");
    for (std::size_t i = 0; i < n_values.size(); ++i) {
      if (n_values[i] < 1) throw std::invalid_argument("n must be >= 1");
      if (i && n_values[i] <= n_values[i - 1]) throw std::invalid_argument("n_values must be strictly ascending");
    }
  }
};

class BenchmarkTooSmall : public std::invalid_argument {
 public:
  explicit BenchmarkTooSmall(std::size_t n) : std::invalid_argument("benchmark too small for n=" + std::to_string(n)) {}
};

namespace detail {

inline std::uint64_t line_hash(const std::string& s) { return util::fnv1a64(s); }

inline std::uint64_t window_hash(const std::vector<std::uint64_t>& h, std::size_t start, std::size_t n) {
  std::uint64_t acc = 0x9e3779b97f4a7c15ULL ^ n;
  for (std::size_t i = start; i < start + n; ++i) {
    acc ^= h[i] + 0x9e3779b97f4a7c15ULL + (acc << 6) + (acc >> 2);
  }
  return acc;
}

/// Hash index over every n-line window of a corpus; hits are confirmed by
/// comparing the lines themselves.
class WindowIndex {
 public:
  WindowIndex(const std::vector<Lines>& docs, std::size_t n) : docs_(docs), n_(n) {
    hashes_.resize(docs.size());
    for (std::size_t d = 0; d < docs.size(); ++d) {
      for (const auto& l : docs[d]) hashes_[d].push_back(line_hash(l));
      if (docs[d].size() < n) continue;
      for (std::size_t s = 0; s + n <= docs[d].size(); ++s) index_.emplace(window_hash(hashes_[d], s, n), Pos{d, s});
    }
  }

  bool contains(const Lines& doc, const std::vector<std::uint64_t>& doc_hashes, std::size_t start) const {
    auto [lo, hi] = index_.equal_range(window_hash(doc_hashes, start, n_));
    for (auto it = lo; it != hi; ++it) {
      const auto& cand = docs_[it->second.doc];
      if (std::equal(doc.begin() + static_cast<std::ptrdiff_t>(start),
                     doc.begin() + static_cast<std::ptrdiff_t>(start + n_),
                     cand.begin() + static_cast<std::ptrdiff_t>(it->second.start)))
        return true;
    }
    return false;
  }

 private:
  struct Pos {
    std::size_t doc;
    std::size_t start;
  };
  const std::vector<Lines>& docs_;
  std::size_t n_;
  std::vector<std::vector<std::uint64_t>> hashes_;
  std::unordered_multimap<std::uint64_t, Pos> index_;
};

}  // namespace detail

struct WindowCount {
  std::size_t matched = 0;
  std::size_t total = 0;
  double ratio() const { return total ? static_cast<double>(matched) / static_cast<double>(total) : 0.0; }
};

/// Counts the n-line windows of `probe` that occur verbatim somewhere in
/// `reference`. Windows never span two documents.
inline WindowCount count_windows(const std::vector<Lines>& probe, const std::vector<Lines>& reference, std::size_t n) {
  if (n < 1) throw std::invalid_argument("n must be >= 1");
  detail::WindowIndex idx(reference, n);
  WindowCount c;
  for (const auto& doc : probe) {
    if (doc.size() < n) continue;
    std::vector<std::uint64_t> h;
    for (const auto& l : doc) h.push_back(detail::line_hash(l));
    for (std::size_t s = 0; s + n <= doc.size(); ++s) {
      ++c.total;
      c.matched += idx.contains(doc, h, s);
    }
  }
  return c;
}

/// Share of benchmark windows (every n consecutive normalized lines of a
/// canonical solution) that also appear in the dataset's code.
inline double duplicate_ratio(const std::vector<Lines>& dataset, const std::vector<Lines>& benchmark, std::size_t n,
                              bool dataset_denominator = false) {
  const auto& probe = dataset_denominator ? dataset : benchmark;
  const auto& ref = dataset_denominator ? benchmark : dataset;
  auto c = count_windows(probe, ref, n);
  if (c.total == 0) throw BenchmarkTooSmall(n);
  return c.ratio();
}

inline std::vector<Lines> normalize_all(const std::vector<std::string>& docs) {
  std::vector<Lines> out;
  out.reserve(docs.size());
  for (const auto& d : docs) out.push_back(normalize_lines(d));
  return out;
}

struct LeakageTable {
  std::vector<std::size_t> n_values;
  std::vector<std::string> suites;
  /// ratios[suite][i] pairs with n_values[i]; nullopt when the suite is too small.
  std::map<std::string, std::vector<std::optional<double>>> ratios;
};

inline LeakageTable leakage_table(const std::vector<Lines>& dataset,
                                  const std::vector<std::pair<std::string, std::vector<Lines>>>& suites,
                                  const LeakageConfig& cfg) {
  cfg.check();
  LeakageTable t;
  t.n_values = cfg.n_values;
  for (const auto& [name, bench] : suites) {
    t.suites.push_back(name);
    auto& row = t.ratios[name];
    for (auto n : cfg.n_values) {
      try {
        row.push_back(duplicate_ratio(dataset, bench, n, cfg.dataset_denominator));
      } catch (const BenchmarkTooSmall&) {
        row.push_back(std::nullopt);
      }
    }
  }
  return t;
}

inline std::string percent(std::optional<double> v) {
  if (!v) return "n/a";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f%%", *v * 100.0);
  return buf;
}

inline void print_table(std::ostream& os, const LeakageTable& t) {
  os << std::left << std::setw(8) << "n";
  for (const auto& s : t.suites) os << std::setw(16) << s;
  os << "\n";
  for (std::size_t i = 0; i < t.n_values.size(); ++i) {
    os << std::left << std::setw(8) << (std::to_string(t.n_values[i]) + "-line");
    for (const auto& s : t.suites) os << std::setw(16) << percent(t.ratios.at(s)[i]);
    os << "\n";
  }
}

inline nlohmann::json table_to_json(const LeakageTable& t) {
  nlohmann::json rows = nlohmann::json::array();
  for (std::size_t i = 0; i < t.n_values.size(); ++i) {
    nlohmann::json row{{"n", t.n_values[i]}};
    for (const auto& s : t.suites) {
      auto v = t.ratios.at(s)[i];
      row[s] = v ? nlohmann::json(*v) : nlohmann::json(nullptr);
    }
    rows.push_back(row);
  }
  return {{"suites", t.suites}, {"rows", rows}};
}

}  // namespace codefb::leakage
