#pragma once

#include <string>
#include <string_view>
#include <vector>

#include "codefb/util/text.hpp"

namespace codefb {

struct CodeBlock {
  std::string language;  // lowercased first word of the info string; may be empty
  std::string source;

  friend bool operator==(const CodeBlock&, const CodeBlock&) = default;
};

namespace detail {

inline std::size_t fence_run(std::string_view line) {
  std::size_t n = 0;
  while (n < line.size() && line[n] == '`') ++n;
  return n;
}

}  // namespace detail

/// Fenced blocks in document order.
///
/// A fence is a line whose first non-blank characters are three or more
/// backticks. The opening fence may carry an info string; only its first word
/// is kept, lowercased. A block closes at the next line holding nothing but a
/// backtick run at least as long as the opener, so "```lang" lines inside a
/// block are content. An unclosed block runs to the end of the text.
inline std::vector<CodeBlock> extract_code_blocks(std::string_view text) {
  std::vector<CodeBlock> blocks;
  auto lines = util::split_lines(text);

  bool inside = false;
  std::size_t open_len = 0;
  CodeBlock current;
  std::vector<std::string_view> body;

  auto flush = [&] {
    std::string src;
    for (std::size_t i = 0; i < body.size(); ++i) {
      if (i) src += '\n';
      src += body[i];
    }
    current.source = std::move(src);
    blocks.push_back(std::move(current));
    current = {};
    body.clear();
  };

  for (auto raw : lines) {
    auto line = raw;
    while (!line.empty() && (line.front() == ' ' || line.front() == '\t')) line.remove_prefix(1);
    auto run = detail::fence_run(line);

    if (!inside) {
      if (run >= 3) {
        auto info = util::trim(line.substr(run));
        if (info.find('`') != std::string_view::npos) continue;  // inline code span, not a fence
        auto space = info.find_first_of(" \t{");
        current.language = util::to_lower(info.substr(0, space));
        open_len = run;
        inside = true;
      }
      continue;
    }

    if (run >= open_len && util::trim(line.substr(run)).empty()) {
      flush();
      inside = false;
      continue;
    }
    body.push_back(raw);
  }
  if (inside) {
    while (!body.empty() && util::trim(body.back()).empty()) body.pop_back();
    flush();
  }
  return blocks;
}

inline std::string canonical_language(std::string_view tag) {
  auto t = util::to_lower(tag);
  if (t == "py" || t == "python3" || t == "python") return "python";
  if (t == "sh" || t == "bash" || t == "shell") return "bash";
  if (t == "c++" || t == "cpp" || t == "cc") return "cpp";
  if (t == "js" || t == "javascript" || t == "node") return "javascript";
  return t;
}

/// Joins the blocks tagged with `language` (after alias folding). When no block
/// carries that tag, untagged blocks are used instead. Empty result means no
/// runnable code was found.
inline std::string select_code(const std::vector<CodeBlock>& blocks, std::string_view language) {
  auto want = canonical_language(language);
  auto join = [&](auto pred) {
    std::string out;
    bool first = true;
    for (const auto& b : blocks) {
      if (!pred(b)) continue;
      if (!first) out += "\n\n";
      out += b.source;
      first = false;
    }
    return out;
  };
  auto tagged = join([&](const CodeBlock& b) { return canonical_language(b.language) == want; });
  if (!tagged.empty()) return tagged;
  return join([](const CodeBlock& b) { return b.language.empty(); });
}

}  // namespace codefb
