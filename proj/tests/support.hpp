#pragma once

#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "codefb/sandbox/executor.hpp"
#include "codefb/sandbox/subprocess.hpp"

namespace codefb::testing {

inline std::filesystem::path source_path(const std::string& rel) { return std::filesystem::path(CODEFB_SOURCE_DIR) / rel; }

inline std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void spit(const std::filesystem::path& p, const std::string& text) {
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  out << text;
}

/// Scratch directory removed on destruction.
class Scratch {
 public:
  Scratch() : dir_({}, false) {}
  std::filesystem::path operator/(const std::string& name) const { return dir_.path() / name; }
  const std::filesystem::path& path() const { return dir_.path(); }

 private:
  detail::TempDir dir_;
};

struct CliRun {
  int exit_code = -1;
  std::string out;
  std::string err;
};

/// Runs the built CLI with a minimal environment plus `extra_env`.
inline CliRun run_cli(const std::vector<std::string>& args, const std::vector<std::string>& extra_env = {},
                      std::chrono::milliseconds timeout = std::chrono::seconds(120)) {
  sandbox::ProcessSpec spec;
  spec.argv.push_back(CODEFB_CLI_PATH);
  spec.argv.insert(spec.argv.end(), args.begin(), args.end());
  spec.cwd = CODEFB_SOURCE_DIR;
  spec.env = detail::allowlisted_env();
  for (const auto& e : extra_env) spec.env.push_back(e);
  spec.timeout = timeout;
  spec.max_output_bytes = 4 * 1024 * 1024;
  auto r = sandbox::run_process(spec);
  return {r.signaled ? -r.signal : r.exit_code, r.out, r.err};
}

}  // namespace codefb::testing
