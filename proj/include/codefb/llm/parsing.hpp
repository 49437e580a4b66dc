#pragma once

#include <cctype>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>

#include <nlohmann/json.hpp>

namespace codefb::llm {

struct HumanFeedbackVerdict {
  std::string satisfied;
  std::string not_satisfied;
  std::string feedback;
  friend bool operator==(const HumanFeedbackVerdict&, const HumanFeedbackVerdict&) = default;
};

class MalformedVerdict : public std::runtime_error {
 public:
  MalformedVerdict(std::string raw, const std::string& why)
      : std::runtime_error("malformed verdict: " + why), raw_(std::move(raw)) {}
  const std::string& raw() const { return raw_; }

 private:
  std::string raw_;
};

class MalformedRating : public std::runtime_error {
 public:
  explicit MalformedRating(std::string raw)
      : std::runtime_error("no rating in 1..5 found"), raw_(std::move(raw)) {}
  const std::string& raw() const { return raw_; }

 private:
  std::string raw_;
};

namespace detail {

/// Start/end of the balanced {...} beginning at `open`, honouring JSON string
/// escapes. nullopt when it never closes.
inline std::optional<std::size_t> balanced_end(std::string_view s, std::size_t open) {
  int depth = 0;
  bool in_str = false;
  for (std::size_t i = open; i < s.size(); ++i) {
    char c = s[i];
    if (in_str) {
      if (c == '\\') ++i;
      else if (c == '"') in_str = false;
      continue;
    }
    if (c == '"') in_str = true;
    else if (c == '{') ++depth;
    else if (c == '}' && --depth == 0) return i;
  }
  return std::nullopt;
}

}  // namespace detail

/// First balanced JSON object in `text` that parses; fences and surrounding
/// prose are skipped over naturally.
inline std::optional<nlohmann::json> first_json_object(std::string_view text) {
  for (std::size_t i = text.find('{'); i != std::string_view::npos; i = text.find('{', i + 1)) {
    auto end = detail::balanced_end(text, i);
    if (!end) continue;
    auto j = nlohmann::json::parse(text.substr(i, *end - i + 1), nullptr, false);
    if (!j.is_discarded() && j.is_object()) return j;
  }
  return std::nullopt;
}

inline HumanFeedbackVerdict parse_verdict(std::string_view text) {
  auto j = first_json_object(text);
  if (!j) throw MalformedVerdict(std::string(text), "no JSON object");
  HumanFeedbackVerdict v;
  auto field = [&](const char* name, std::string& dst) {
    auto it = j->find(name);
    if (it == j->end()) throw MalformedVerdict(std::string(text), std::string("missing '") + name + "'");
    if (!it->is_string()) throw MalformedVerdict(std::string(text), std::string("'") + name + "' is not a string");
    dst = it->get<std::string>();
  };
  field("satisfied", v.satisfied);
  field("not_satisfied", v.not_satisfied);
  field("feedback", v.feedback);
  if (v.feedback.find_first_not_of(" \t\r\n") == std::string::npos)
    throw MalformedVerdict(std::string(text), "empty feedback");
  return v;
}

inline std::string serialize_verdict(const HumanFeedbackVerdict& v) {
  return nlohmann::json{{"satisfied", v.satisfied}, {"not_satisfied", v.not_satisfied}, {"feedback", v.feedback}}
      .dump(4);
}

/// First standalone integer token of value 1..5. If none qualifies, an
/// "N Point(s)" phrase anywhere is accepted.
inline int parse_rating(std::string_view text) {
  auto is_digit = [](char c) { return std::isdigit(static_cast<unsigned char>(c)) != 0; };
  std::optional<int> points;
  for (std::size_t i = 0; i < text.size();) {
    if (!is_digit(text[i])) {
      ++i;
      continue;
    }
    std::size_t j = i;
    while (j < text.size() && is_digit(text[j])) ++j;
    // "3.5" or "v2" are not rating tokens.
    bool glued = (i > 0 && (std::isalpha(static_cast<unsigned char>(text[i - 1])) || text[i - 1] == '.')) ||
                 (j + 1 < text.size() && text[j] == '.' && is_digit(text[j + 1]));
    auto token = text.substr(i, j - i);
    if (!glued && token.size() == 1 && token[0] >= '1' && token[0] <= '5') return token[0] - '0';
    if (!points && token.size() == 1 && token[0] >= '1' && token[0] <= '5') {
      auto rest = text.substr(j);
      auto k = rest.find_first_not_of(' ');
      if (k != std::string_view::npos && rest.substr(k).starts_with("Point")) points = token[0] - '0';
    }
    i = j;
  }
  if (points) return *points;
  throw MalformedRating(std::string(text));
}

}  // namespace codefb::llm
