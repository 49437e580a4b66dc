#pragma once

#include <map>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

#include "codefb/llm/http_provider.hpp"
#include "codefb/llm/provider.hpp"

namespace codefb::llm {

/// Builds providers from specs: "echo", "http", "scripted:PATH", and
/// "oracle" when oracle entries are supplied. The same spec always yields the
/// same instance, so roles sharing a script also share its queue.
class ProviderFactory {
 public:
  explicit ProviderFactory(std::vector<OracleProvider::Entry> oracle = {}) : oracle_(std::move(oracle)) {}

  Provider& get(const std::string& spec) {
    auto it = cache_.find(spec);
    if (it != cache_.end()) return *it->second;
    return *cache_.emplace(spec, make(spec)).first->second;
  }

  static bool is_scripted(const std::string& spec) { return spec.rfind("scripted:", 0) == 0; }

 private:
  std::unique_ptr<Provider> make(const std::string& spec) const {
    if (spec == "echo") return std::make_unique<EchoProvider>();
    if (spec == "http") return std::make_unique<HttpChatProvider>(HttpEndpoint::from_env());
    if (is_scripted(spec)) return ScriptedProvider::from_file(spec.substr(9));
    if (spec == "oracle") {
      if (oracle_.empty()) throw std::invalid_argument("provider 'oracle' is only available with a task suite");
      return std::make_unique<OracleProvider>(oracle_);
    }
    throw std::invalid_argument("unknown provider spec '" + spec + "' (expected echo, http, oracle or scripted:PATH)");
  }

  std::vector<OracleProvider::Entry> oracle_;
  std::map<std::string, std::unique_ptr<Provider>> cache_;
};

}  // namespace codefb::llm
