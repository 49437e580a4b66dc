#pragma once

#include <algorithm>
#include <cstdint>
#include <map>
#include <random>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include "codefb/core/types.hpp"
#include "codefb/knn/embedding.hpp"
#include "codefb/pipeline/items.hpp"

namespace codefb::pipeline {

struct PackingConfig {
  std::size_t k = 4;
  std::vector<int> group_size_choices{2, 3};  // sizes count the query itself
  std::uint64_t rng_seed = 0;

  void check() const {
    if (k == 0) throw std::invalid_argument("k must be positive");
    if (group_size_choices.empty()) throw std::invalid_argument("group_size_choices is empty");
    for (int g : group_size_choices) {
      if (g < 2) throw std::invalid_argument("group sizes must be >= 2");
      if (static_cast<std::size_t>(g) > k + 1) throw std::invalid_argument("group size cannot exceed k + 1");
    }
  }
};

struct PackingResult {
  std::vector<PackedSample> samples;
  std::vector<std::string> bypassed;
};

/// Greedy packing in ascending id order. Each unused item takes its k
/// nearest neighbours, drops the used ones, draws a group size and claims
/// the closest remaining neighbours. An item with no free neighbour is
/// skipped but stays claimable by later queries; `bypassed` lists the ones
/// left in no group. The RNG is drawn once per group formed.
inline PackingResult pack_single_turn(std::vector<SingleTurnItem> items, const knn::EmbeddingStore& store,
                                      const PackingConfig& cfg) {
  cfg.check();
  std::sort(items.begin(), items.end(), [](const auto& a, const auto& b) { return a.id < b.id; });
  std::map<std::string, const SingleTurnItem*> by_id;
  for (const auto& it : items) {
    if (!store.contains(it.id)) throw std::invalid_argument("store has no vector for item '" + it.id + "'");
    if (util::trim(it.response).empty()) throw std::invalid_argument("item '" + it.id + "' has no response to pack");
    if (!by_id.emplace(it.id, &it).second) throw std::invalid_argument("duplicate item id '" + it.id + "'");
  }

  std::mt19937_64 rng(cfg.rng_seed);
  std::set<std::string> used;
  PackingResult out;
  for (const auto& it : items) {
    if (used.count(it.id)) continue;
    std::vector<std::string> free;
    for (auto& id : knn::knn(it.id, store, cfg.k)) {
      // Neighbours outside the item set have no response to pack.
      if (!used.count(id) && by_id.count(id)) free.push_back(std::move(id));
    }
    if (free.empty()) {
      out.bypassed.push_back(it.id);
      continue;
    }
    auto size = static_cast<std::size_t>(cfg.group_size_choices[rng() % cfg.group_size_choices.size()]);
    free.resize(std::min(free.size(), size - 1));

    PackedSample s;
    s.method = Method::SingleTurnPacking;
    s.source_ids.push_back(it.id);
    for (auto& id : free) s.source_ids.push_back(id);
    s.dialogue.id = "pack-" + it.id;
    for (const auto& id : s.source_ids) {
      used.insert(id);
      const auto& member = *by_id.at(id);
      s.dialogue.messages.push_back(Message::user(member.query));
      s.dialogue.messages.push_back(Message::assistant(member.response));
    }
    out.samples.push_back(std::move(s));
  }
  std::erase_if(out.bypassed, [&](const std::string& id) { return used.count(id) > 0; });
  return out;
}

inline knn::EmbeddingStore build_store(const std::vector<SingleTurnItem>& items, knn::Embedder& embedder) {
  std::vector<std::string> texts;
  for (const auto& it : items) texts.push_back(it.query);
  auto vecs = embedder.embed(texts);
  knn::EmbeddingStore store(embedder.dim());
  for (std::size_t i = 0; i < items.size(); ++i) store.add(items[i].id, std::move(vecs[i]));
  return store;
}

}  // namespace codefb::pipeline
