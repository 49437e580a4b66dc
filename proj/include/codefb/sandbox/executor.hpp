#pragma once

#include <unistd.h>

#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "codefb/sandbox/fences.hpp"
#include "codefb/sandbox/outcome.hpp"
#include "codefb/sandbox/subprocess.hpp"
#include "codefb/util/parallel.hpp"
#include "codefb/util/text.hpp"

namespace codefb {

struct TestCase {
  std::string input;
  std::string expected;
  friend bool operator==(const TestCase&, const TestCase&) = default;
};

/// Stdio: input is fed on stdin and stdout is compared with expected.
/// Expression: input is an expression appended to the program; the printed
/// repr of its value is compared with expected.
enum class TestStyle { Stdio, Expression };

/// How one language tag is run. "{file}" in `command` is replaced by the
/// source file name (relative to the run directory, so diagnostics stay
/// free of temp paths).
struct LanguageRuntime {
  std::string file_name;
  std::vector<std::string> command;
  std::string expression_template;  // "{expr}" placeholder; empty: unsupported
};

struct ExecutorConfig {
  std::map<std::string, LanguageRuntime> runtimes;
  std::size_t pool_size = 4;

  static ExecutorConfig defaults() {
    ExecutorConfig c;
    c.runtimes["python"] = {"main.py", {"python3", "-s", "-B", "{file}"}, "\n\nprint(repr({expr}))\n"};
    c.runtimes["bash"] = {"main.sh", {"bash", "{file}"}, ""};
    return c;
  }
};

namespace detail {

class TempDir {
 public:
  TempDir(const std::filesystem::path& root, bool keep) : keep_(keep) {
    auto base = root.empty() ? std::filesystem::temp_directory_path() : root;
    std::filesystem::create_directories(base);
    std::string tmpl = (base / "codefb-run-XXXXXX").string();
    if (::mkdtemp(tmpl.data()) == nullptr) throw std::runtime_error("mkdtemp failed under " + base.string());
    path_ = tmpl;
  }
  ~TempDir() {
    if (keep_) return;
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
  bool keep_;
};

inline void write_file(const std::filesystem::path& p, std::string_view text) {
  std::ofstream out(p, std::ios::binary);
  out << text;
  if (!out) throw std::runtime_error("cannot write " + p.string());
}

inline std::vector<std::string> allowlisted_env() {
  std::vector<std::string> env;
  const char* path = std::getenv("PATH");
  env.push_back(std::string("PATH=") + (path ? path : "/usr/local/bin:/usr/bin:/bin"));
  for (const char* key : {"LANG", "LC_ALL"}) {
    if (const char* v = std::getenv(key)) env.push_back(std::string(key) + "=" + v);
  }
  env.push_back("PYTHONHASHSEED=0");
  env.push_back("PYTHONIOENCODING=utf-8");
  return env;
}

}  // namespace detail

/// Runs snippets in fresh processes, each in its own temp directory with an
/// allowlisted environment. At most `pool_size` runs are live at once; the
/// executor is safe to share between threads.
class Executor {
 public:
  explicit Executor(ExecutorConfig config = ExecutorConfig::defaults())
      : config_(std::move(config)), pool_(std::make_unique<util::Semaphore>(config_.pool_size)) {}

  bool supports(std::string_view tag) const { return config_.runtimes.count(canonical_language(tag)) > 0; }

  const ExecutorConfig& config() const { return config_; }

  ExecutionOutcome execute(std::string_view source, std::string_view tag, const ExecutionLimits& limits) const {
    const auto& rt = runtime(tag);
    limits.check();
    return run_once(rt, source, {}, limits, limits.wall_timeout);
  }

  /// Runs every case until the first failure, which decides the status. The
  /// wall timeout is a budget shared by all cases of one call.
  ExecutionOutcome run_tests(std::string_view source, std::string_view tag, const std::vector<TestCase>& tests,
                             const ExecutionLimits& limits, TestStyle style = TestStyle::Stdio) const {
    if (tests.empty()) throw std::invalid_argument("run_tests needs at least one test case");
    const auto& rt = runtime(tag);
    limits.check();
    if (style == TestStyle::Expression && rt.expression_template.empty()) throw UnsupportedLanguage(std::string(tag));

    Millis used{0};
    ExecutionOutcome last;
    for (const auto& tc : tests) {
      auto remaining = limits.wall_timeout - used;
      if (remaining.count() <= 0) {
        last = {};
        last.status = ExecStatus::Timeout;
        last.duration = used;
        return last;
      }
      std::string program(source);
      std::string stdin_text;
      if (style == TestStyle::Expression) {
        program += util::replace_all(rt.expression_template, "{expr}", tc.input);
      } else {
        stdin_text = tc.input;
      }
      last = run_once(rt, program, stdin_text, limits, remaining);
      used += last.duration;
      last.duration = used;
      if (last.status != ExecStatus::Pass) return last;

      auto actual = std::string(util::trim_right(last.stdout_text));
      auto expected = std::string(util::trim_right(tc.expected));
      if (actual != expected) {
        last.status = ExecStatus::OutputMismatch;
        last.mismatch = Mismatch{tc.input, expected, actual};
        return last;
      }
    }
    return last;
  }

  /// Appends a test script (asserts) to the source and runs it once.
  ExecutionOutcome run_script(std::string_view source, std::string_view tag, std::string_view test_script,
                              const ExecutionLimits& limits) const {
    std::string program(source);
    program += "\n\n";
    program += test_script;
    program += "\n";
    return execute(program, tag, limits);
  }

 private:
  const LanguageRuntime& runtime(std::string_view tag) const {
    auto it = config_.runtimes.find(canonical_language(tag));
    if (it == config_.runtimes.end()) throw UnsupportedLanguage(std::string(tag));
    return it->second;
  }

  ExecutionOutcome run_once(const LanguageRuntime& rt, std::string_view source, std::string_view stdin_text,
                            const ExecutionLimits& limits, Millis timeout) const {
    util::SemaphoreGuard slot(*pool_);
    detail::TempDir dir(limits.work_root, limits.keep_artifacts);
    detail::write_file(dir.path() / rt.file_name, source);

    sandbox::ProcessSpec spec;
    for (const auto& part : rt.command) spec.argv.push_back(util::replace_all(part, "{file}", rt.file_name));
    spec.cwd = dir.path();
    if (!stdin_text.empty()) {
      spec.stdin_file = dir.path() / ".stdin";
      detail::write_file(spec.stdin_file, stdin_text);
    }
    spec.env = detail::allowlisted_env();
    spec.timeout = timeout;
    spec.max_output_bytes = limits.max_output_bytes;

    auto r = sandbox::run_process(spec);

    ExecutionOutcome o;
    o.stdout_text = std::move(r.out);
    // Diagnostics name files relative to the run directory, so feedback text
    // does not vary with the temp path.
    o.stderr_text = util::replace_all(r.err, dir.path().string() + "/", "");
    o.duration = r.duration;
    o.exit_code = r.exit_code;
    if (r.timed_out) {
      o.status = ExecStatus::Timeout;
    } else if (r.exit_code == 0 && !r.signaled) {
      o.status = ExecStatus::Pass;
    } else {
      o.status = ExecStatus::ExceptionRaised;
    }
    return o;
  }

  ExecutorConfig config_;
  std::unique_ptr<util::Semaphore> pool_;
};

}  // namespace codefb
