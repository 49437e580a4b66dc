#pragma once

#include <filesystem>
#include <fstream>
#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "codefb/core/types.hpp"

namespace codefb {

using nlohmann::json;

/// A malformed record: 1-based line number plus the offending field.
class JsonlError : public std::runtime_error {
 public:
  JsonlError(std::string path, std::size_t line, std::string field, const std::string& detail)
      : std::runtime_error(path + ":" + std::to_string(line) + ": field '" + field + "': " + detail),
        path_(std::move(path)), line_(line), field_(std::move(field)) {}

  const std::string& path() const { return path_; }
  std::size_t line() const { return line_; }
  const std::string& field() const { return field_; }

 private:
  std::string path_;
  std::size_t line_;
  std::string field_;
};

/// Thrown by record decoders; the reader adds file and line.
struct FieldError : std::runtime_error {
  FieldError(std::string f, const std::string& detail) : std::runtime_error(detail), field(std::move(f)) {}
  std::string field;
};

namespace detail {

inline const json& require(const json& obj, const char* field) {
  auto it = obj.find(field);
  if (it == obj.end()) throw FieldError(field, "missing");
  return *it;
}

inline std::string require_string(const json& obj, const char* field) {
  const auto& v = require(obj, field);
  if (!v.is_string()) throw FieldError(field, "expected a string");
  return v.get<std::string>();
}

inline std::vector<std::string> string_list(const json& obj, const char* field, bool required) {
  auto it = obj.find(field);
  if (it == obj.end()) {
    if (required) throw FieldError(field, "missing");
    return {};
  }
  if (!it->is_array()) throw FieldError(field, "expected an array");
  std::vector<std::string> out;
  for (const auto& v : *it) {
    if (!v.is_string()) throw FieldError(field, "expected an array of strings");
    out.push_back(v.get<std::string>());
  }
  return out;
}

}  // namespace detail

inline json message_to_json(const Message& m) {
  return json{{"role", to_string(m.role())}, {"content", m.content()}};
}

inline Message message_from_json(const json& j) {
  auto role_text = detail::require_string(j, "role");
  auto role = parse_role(role_text);
  if (!role) throw FieldError("role", "unknown role '" + role_text + "'");
  return Message(*role, detail::require_string(j, "content"));
}

inline json messages_to_json(const std::vector<Message>& msgs) {
  json arr = json::array();
  for (const auto& m : msgs) arr.push_back(message_to_json(m));
  return arr;
}

inline std::vector<Message> messages_from_json(const json& arr) {
  if (!arr.is_array()) throw FieldError("messages", "expected an array");
  std::vector<Message> out;
  for (const auto& m : arr) {
    if (!m.is_object()) throw FieldError("messages", "expected an array of objects");
    out.push_back(message_from_json(m));
  }
  return out;
}

/// {id, method, source_ids, messages:[{role, content}]}. Flags derive from
/// method and code blocks from content, so neither is stored.
inline json sample_to_json(const PackedSample& s) {
  return json{{"id", s.dialogue.id},
              {"method", to_string(s.method)},
              {"source_ids", s.source_ids},
              {"messages", messages_to_json(s.dialogue.messages)}};
}

inline PackedSample sample_from_json(const json& j) {
  if (!j.is_object()) throw FieldError("<record>", "expected a JSON object");
  PackedSample s;
  s.dialogue.id = detail::require_string(j, "id");
  auto method_text = detail::require_string(j, "method");
  auto method = parse_method(method_text);
  if (!method) throw FieldError("method", "unknown method '" + method_text + "'");
  s.method = *method;
  s.source_ids = detail::string_list(j, "source_ids", true);
  s.dialogue.messages = messages_from_json(detail::require(j, "messages"));
  return s;
}

/// Calls `on_record(json, line_number)` for every non-blank line. Parse errors
/// and FieldErrors thrown by the callback become JsonlErrors.
inline void for_each_jsonl(const std::filesystem::path& path,
                           const std::function<void(const json&, std::size_t)>& on_record) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::parse_error& e) {
      throw JsonlError(path.string(), lineno, "<record>", e.what());
    }
    try {
      on_record(j, lineno);
    } catch (const FieldError& e) {
      throw JsonlError(path.string(), lineno, e.field, e.what());
    } catch (const json::exception& e) {
      throw JsonlError(path.string(), lineno, "<record>", e.what());
    }
  }
}

template <typename T, typename Decode>
std::vector<T> read_jsonl_as(const std::filesystem::path& path, Decode decode) {
  std::vector<T> out;
  for_each_jsonl(path, [&](const json& j, std::size_t) { out.push_back(decode(j)); });
  return out;
}

inline std::vector<PackedSample> read_jsonl(const std::filesystem::path& path) {
  return read_jsonl_as<PackedSample>(path, sample_from_json);
}

inline std::string to_jsonl_line(const json& j) {
  return j.dump(-1, ' ', false, json::error_handler_t::replace) + "\n";
}

template <typename T, typename Encode>
void write_jsonl_as(const std::filesystem::path& path, const std::vector<T>& records, Encode encode) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  for (const auto& r : records) out << to_jsonl_line(encode(r));
  if (!out) throw std::runtime_error("write failed: " + path.string());
}

inline void write_jsonl(const std::filesystem::path& path, const std::vector<PackedSample>& samples) {
  write_jsonl_as(path, samples, sample_to_json);
}

}  // namespace codefb
