#pragma once

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <mutex>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

#include <nlohmann/json.hpp>

#include "codefb/llm/http_provider.hpp"
#include "codefb/util/text.hpp"

namespace codefb::knn {

using Vector = std::vector<double>;

inline double dot(const Vector& a, const Vector& b) {
  double s = 0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

inline double norm(const Vector& v) { return std::sqrt(dot(v, v)); }

inline Vector normalized(Vector v) {
  double n = norm(v);
  if (n == 0 || !std::isfinite(n)) throw std::invalid_argument("cannot normalize a zero or non-finite vector");
  for (auto& x : v) x /= n;
  return v;
}

/// id -> unit vector, all of one dimension. Ordered by id so iteration is
/// deterministic.
class EmbeddingStore {
 public:
  explicit EmbeddingStore(std::size_t dim) : dim_(dim) {
    if (dim == 0) throw std::invalid_argument("dim must be positive");
  }

  /// Normalizes on insert.
  void add(const std::string& id, Vector v) {
    if (v.size() != dim_)
      throw std::invalid_argument("vector for '" + id + "' has dim " + std::to_string(v.size()) + ", store has " +
                                  std::to_string(dim_));
    if (entries_.count(id)) throw std::invalid_argument("duplicate id '" + id + "'");
    entries_.emplace(id, normalized(std::move(v)));
  }

  std::size_t dim() const { return dim_; }
  std::size_t size() const { return entries_.size(); }
  bool contains(const std::string& id) const { return entries_.count(id) > 0; }
  const Vector& at(const std::string& id) const {
    auto it = entries_.find(id);
    if (it == entries_.end()) throw std::out_of_range("unknown id '" + id + "'");
    return it->second;
  }
  const std::map<std::string, Vector>& entries() const { return entries_; }

 private:
  std::size_t dim_;
  std::map<std::string, Vector> entries_;
};

/// Exact cosine kNN: the k other ids by descending similarity, ties by
/// ascending id.
inline std::vector<std::string> knn(const std::string& query_id, const EmbeddingStore& store, std::size_t k) {
  if (k == 0) throw std::invalid_argument("k must be positive");
  if (k >= store.size())
    throw std::invalid_argument("k=" + std::to_string(k) + " needs a store larger than " + std::to_string(store.size()));
  const auto& q = store.at(query_id);
  std::vector<std::pair<double, const std::string*>> scored;
  scored.reserve(store.size() - 1);
  for (const auto& [id, v] : store.entries()) {
    if (id != query_id) scored.emplace_back(dot(q, v), &id);
  }
  auto better = [](const auto& a, const auto& b) {
    if (a.first != b.first) return a.first > b.first;
    return *a.second < *b.second;
  };
  std::partial_sort(scored.begin(), scored.begin() + static_cast<std::ptrdiff_t>(k), scored.end(), better);
  std::vector<std::string> out;
  for (std::size_t i = 0; i < k; ++i) out.push_back(*scored[i].second);
  return out;
}

class Embedder {
 public:
  virtual ~Embedder() = default;
  /// One unit vector per text.
  virtual std::vector<Vector> embed(const std::vector<std::string>& texts) = 0;
  virtual std::size_t dim() const = 0;
  virtual std::string id() const = 0;
};

/// Deterministic stand-in for a sentence encoder: each lowercased token adds a
/// seeded pseudo-random vector, so shared vocabulary means high cosine.
class HashEmbedder : public Embedder {
 public:
  explicit HashEmbedder(std::size_t dim = 32, std::uint64_t seed = 0x5eed) : dim_(dim), seed_(seed) {}

  std::vector<Vector> embed(const std::vector<std::string>& texts) override {
    std::vector<Vector> out;
    out.reserve(texts.size());
    for (const auto& t : texts) out.push_back(embed_one(t));
    return out;
  }

  Vector embed_one(std::string_view text) const {
    Vector v(dim_, 0.0);
    std::string token;
    auto flush = [&] {
      if (token.empty()) return;
      std::uint64_t state = util::fnv1a64(token, 0xcbf29ce484222325ULL ^ seed_);
      for (auto& x : v) {
        // Uniform in [-1, 1).
        x += static_cast<double>(util::splitmix64(state) >> 11) * 0x1.0p-52 - 1.0;
      }
      token.clear();
    };
    for (char c : text) {
      if (std::isalnum(static_cast<unsigned char>(c)) || c == '_') {
        token += static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
      } else {
        flush();
      }
    }
    flush();
    if (norm(v) == 0) v[0] = 1.0;  // empty text
    return normalized(std::move(v));
  }

  std::size_t dim() const override { return dim_; }
  std::string id() const override { return "hash" + std::to_string(dim_); }

 private:
  std::size_t dim_;
  std::uint64_t seed_;
};

/// OpenAI-style POST {base}/embeddings with {model, input:[...]}.
class HttpEmbedder : public Embedder {
 public:
  HttpEmbedder(llm::HttpEndpoint ep, std::size_t dim) : ep_(std::move(ep)), dim_(dim) {}

  std::vector<Vector> embed(const std::vector<std::string>& texts) override {
    if (texts.empty()) return {};
    nlohmann::json body{{"model", ep_.model}, {"input", texts}};
    auto res = llm::detail::post_json(ep_, "/embeddings", body);
    if (!res) throw llm::TransportError("transport: " + httplib::to_string(res.error()));
    llm::detail::classify_status(res->status, res->body);
    auto j = nlohmann::json::parse(res->body, nullptr, false);
    if (j.is_discarded() || !j.contains("data")) throw llm::ProviderRefusal("unexpected embeddings response");
    std::vector<Vector> out(texts.size());
    for (const auto& item : j["data"]) {
      auto idx = item.value("index", std::size_t{0});
      if (idx >= out.size()) throw llm::ProviderRefusal("embedding index out of range");
      auto v = item.at("embedding").get<Vector>();
      if (v.size() != dim_) throw llm::ProviderRefusal("embedding has unexpected dimension");
      out[idx] = normalized(std::move(v));
    }
    for (const auto& v : out) {
      if (v.empty()) throw llm::ProviderRefusal("missing embedding in response");
    }
    return out;
  }

  std::size_t dim() const override { return dim_; }
  std::string id() const override { return "http:" + ep_.model; }

 private:
  llm::HttpEndpoint ep_;
  std::size_t dim_;
};

/// Wraps an embedder with a JSON cache file keyed by embedder id plus a hash
/// of the text. Only misses reach the inner embedder.
class CachedEmbedder : public Embedder {
 public:
  CachedEmbedder(Embedder& inner, std::filesystem::path path) : inner_(inner), path_(std::move(path)) {
    std::ifstream in(path_);
    if (!in) return;
    auto j = nlohmann::json::parse(in, nullptr, false);
    if (j.is_discarded() || !j.is_object()) return;
    for (const auto& [k, v] : j.items()) cache_[k] = v.get<Vector>();
  }

  std::vector<Vector> embed(const std::vector<std::string>& texts) override {
    std::lock_guard lock(mu_);
    std::vector<std::string> missing;
    for (const auto& t : texts) {
      if (!cache_.count(key(t))) missing.push_back(t);
    }
    if (!missing.empty()) {
      auto fresh = inner_.embed(missing);
      for (std::size_t i = 0; i < missing.size(); ++i) cache_[key(missing[i])] = fresh[i];
      misses_ += missing.size();
      save();
    }
    std::vector<Vector> out;
    for (const auto& t : texts) out.push_back(cache_.at(key(t)));
    return out;
  }

  std::size_t dim() const override { return inner_.dim(); }
  std::string id() const override { return inner_.id(); }
  std::size_t misses() const { return misses_; }

 private:
  std::string key(const std::string& text) const { return inner_.id() + ":" + util::hex64(util::fnv1a64(text)); }

  void save() const {
    nlohmann::json j = nlohmann::json::object();
    for (const auto& [k, v] : cache_) j[k] = v;
    if (path_.has_parent_path()) std::filesystem::create_directories(path_.parent_path());
    auto tmp = path_;
    tmp += ".tmp";
    {
      std::ofstream out(tmp, std::ios::trunc);
      out << j.dump();
    }
    std::filesystem::rename(tmp, path_);
  }

  Embedder& inner_;
  std::filesystem::path path_;
  std::mutex mu_;
  std::map<std::string, Vector> cache_;
  std::size_t misses_ = 0;
};

}  // namespace codefb::knn
