#include <random>

#include <gtest/gtest.h>

#include "codefb/leakage/leakage.hpp"
#include "support.hpp"

using namespace codefb;
using namespace codefb::leakage;

namespace {

std::vector<Lines> planted(const char* key) {
  auto j = nlohmann::json::parse(codefb::testing::slurp(codefb::testing::source_path("tests/data/leakage_planted.json")));
  return normalize_all(j[key].get<std::vector<std::string>>());
}

/// Direct re-count: compares every window pair.
WindowCount brute(const std::vector<Lines>& probe, const std::vector<Lines>& ref, std::size_t n) {
  WindowCount c;
  for (const auto& d : probe) {
    for (std::size_t s = 0; s + n <= d.size(); ++s) {
      ++c.total;
      bool hit = false;
      for (const auto& r : ref) {
        for (std::size_t t = 0; !hit && t + n <= r.size(); ++t)
          hit = std::equal(d.begin() + static_cast<long>(s), d.begin() + static_cast<long>(s + n),
                           r.begin() + static_cast<long>(t));
      }
      c.matched += hit;
    }
  }
  return c;
}

std::vector<Lines> random_corpus(std::mt19937_64& rng, std::size_t docs, std::size_t vocab) {
  std::vector<Lines> out(docs);
  for (auto& d : out) {
    auto len = rng() % 14;
    for (std::size_t i = 0; i < len; ++i) d.push_back("line" + std::to_string(rng() % vocab));
  }
  return out;
}

}  // namespace

TEST(Normalize, TrimsAndDropsBlankAndCommentLines) {
  EXPECT_EQ(normalize_lines("  a = 1  \n\n   # note\n// c-style\n\tB = 2\n"), (Lines{"a = 1", "B = 2"}));
  EXPECT_EQ(normalize_lines("x = '#not a comment'"), (Lines{"x = '#not a comment'"}));
}

TEST(Leakage, IdenticalCorporaGiveOne) {
  auto bench = planted("benchmark");
  for (std::size_t n : {1u, 3u, 5u}) EXPECT_EQ(duplicate_ratio(bench, bench, n), 1.0);
}

TEST(Leakage, DisjointCorporaGiveZero) {
  auto bench = planted("benchmark");
  std::vector<Lines> other{{"u1", "u2", "u3", "u4", "u5", "u6", "u7"}};
  EXPECT_EQ(duplicate_ratio(other, bench, 5), 0.0);
}

// Counts from tests/oracles/leakage_oracle.py on the same fixture.
TEST(Leakage, PlantedSixLineOverlapMatchesOracle) {
  auto dataset = planted("dataset");
  auto bench = planted("benchmark");
  struct Want {
    std::size_t n, matched, total;
  };
  for (auto w : {Want{5, 2, 9}, Want{6, 1, 7}, Want{7, 0, 5}}) {
    auto c = count_windows(bench, dataset, w.n);
    EXPECT_EQ(c.matched, w.matched) << "n=" << w.n;
    EXPECT_EQ(c.total, w.total) << "n=" << w.n;
  }
  EXPECT_DOUBLE_EQ(duplicate_ratio(dataset, bench, 5), 2.0 / 9.0);
  EXPECT_DOUBLE_EQ(duplicate_ratio(dataset, bench, 6), 1.0 / 7.0);
  EXPECT_EQ(duplicate_ratio(dataset, bench, 7), 0.0);

  auto table = leakage_table(dataset, {{"toy", bench}}, LeakageConfig{});
  std::ostringstream os;
  print_table(os, table);
  EXPECT_NE(os.str().find("22.22%"), std::string::npos);
  EXPECT_NE(os.str().find("14.29%"), std::string::npos);
  EXPECT_NE(os.str().find("0.00%"), std::string::npos);
}

TEST(Leakage, ReverseDenominator) {
  auto dataset = planted("dataset");
  auto bench = planted("benchmark");
  auto fwd = count_windows(bench, dataset, 5);
  auto rev = count_windows(dataset, bench, 5);
  EXPECT_EQ(duplicate_ratio(dataset, bench, 5, true), rev.ratio());
  EXPECT_NE(fwd.total, rev.total);
}

TEST(Leakage, TooSmallBenchmarkIsNotApplicable) {
  std::vector<Lines> tiny{{"a", "b"}};
  EXPECT_THROW(duplicate_ratio(tiny, tiny, 5), BenchmarkTooSmall);
  auto table = leakage_table(tiny, {{"tiny", tiny}}, LeakageConfig{});
  EXPECT_FALSE(table.ratios["tiny"][0]);
  EXPECT_EQ(percent(table.ratios["tiny"][0]), "n/a");
  EXPECT_TRUE(table_to_json(table)["rows"][0]["tiny"].is_null());
}

TEST(Leakage, ConfigValidation) {
  LeakageConfig cfg;
  cfg.n_values = {6, 5};
  EXPECT_THROW(cfg.check(), std::invalid_argument);
  cfg.n_values = {};
  EXPECT_THROW(cfg.check(), std::invalid_argument);
}

// A matched (n+1)-line window contains matched n-line windows, so a zero at n
// stays zero for every longer window; counts agree with the direct re-count.
TEST(LeakageProperty, ZeroPropagatesOnFiftyRandomCorpora) {
  std::mt19937_64 rng(77);
  for (int trial = 0; trial < 50; ++trial) {
    auto vocab = 2 + rng() % 6;
    auto dataset = random_corpus(rng, 1 + rng() % 6, vocab);
    auto bench = random_corpus(rng, 1 + rng() % 6, vocab);
    bool zero_seen = false;
    for (std::size_t n = 1; n <= 8; ++n) {
      auto c = count_windows(bench, dataset, n);
      auto b = brute(bench, dataset, n);
      ASSERT_EQ(c.matched, b.matched) << "trial " << trial << " n=" << n;
      ASSERT_EQ(c.total, b.total);
      if (zero_seen) {
        EXPECT_EQ(c.matched, 0u) << "trial " << trial << " n=" << n;
      }
      if (c.matched == 0) zero_seen = true;
    }
  }
}
