#pragma once

#include <fcntl.h>
#include <poll.h>
#include <signal.h>
#include <sys/stat.h>
#include <sys/types.h>
#include <sys/wait.h>
#include <unistd.h>

#include <algorithm>
#include <cerrno>
#include <chrono>
#include <cstring>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <system_error>
#include <vector>

#include "codefb/util/text.hpp"

namespace codefb::sandbox {

inline constexpr std::string_view kTruncationMarker = "\n[output truncated]";

struct ProcessSpec {
  std::vector<std::string> argv;            // argv[0] is resolved against PATH
  std::filesystem::path cwd;
  std::filesystem::path stdin_file;         // empty: /dev/null
  std::vector<std::string> env;             // "KEY=VALUE"
  std::chrono::milliseconds timeout{10'000};
  std::size_t max_output_bytes = 64 * 1024;
};

struct ProcessResult {
  int exit_code = 0;       // valid when !signaled
  int signal = 0;
  bool signaled = false;
  bool timed_out = false;
  std::string out;
  std::string err;
  bool out_truncated = false;
  bool err_truncated = false;
  std::chrono::milliseconds duration{0};
};

/// Locates `name` on PATH (or returns it unchanged if it already has a slash).
inline std::string resolve_program(const std::string& name, const std::string& path_var) {
  if (name.find('/') != std::string::npos) return name;
  for (const auto& dir : util::split(path_var, ':')) {
    if (dir.empty()) continue;
    auto candidate = std::filesystem::path(dir) / name;
    if (::access(candidate.c_str(), X_OK) == 0) return candidate.string();
  }
  return {};
}

namespace detail {

class Capture {
 public:
  explicit Capture(std::size_t limit) : limit_(limit) {}

  void append(const char* data, std::size_t n) {
    if (buf_.size() < limit_ + 4) {
      // Keep a few bytes past the limit so the UTF-8 cut can see the boundary.
      buf_.append(data, std::min(n, limit_ + 4 - buf_.size()));
    }
    total_ += n;
  }

  bool truncated() const { return total_ > limit_; }

  std::string finish() {
    if (!truncated()) return std::move(buf_);
    buf_.resize(util::utf8_safe_cut(buf_, limit_));
    buf_ += kTruncationMarker;
    return std::move(buf_);
  }

 private:
  std::size_t limit_;
  std::size_t total_ = 0;
  std::string buf_;
};

struct Fd {
  int fd = -1;
  Fd() = default;
  explicit Fd(int f) : fd(f) {}
  Fd(const Fd&) = delete;
  Fd& operator=(const Fd&) = delete;
  ~Fd() { reset(); }
  void reset() {
    if (fd >= 0) ::close(fd);
    fd = -1;
  }
};

}  // namespace detail

/// Runs one process in its own process group with captured, size-capped
/// streams. The whole group is killed on timeout.
inline ProcessResult run_process(const ProcessSpec& spec) {
  using clock = std::chrono::steady_clock;
  if (spec.argv.empty()) throw std::invalid_argument("empty argv");

  std::string path_var = "/usr/local/bin:/usr/bin:/bin";
  for (const auto& kv : spec.env) {
    if (util::starts_with(kv, "PATH=")) path_var = kv.substr(5);
  }
  auto program = resolve_program(spec.argv[0], path_var);
  if (program.empty()) throw std::runtime_error("program not found on PATH: " + spec.argv[0]);

  // Everything the child touches is prepared before fork.
  std::vector<char*> argv;
  for (const auto& a : spec.argv) argv.push_back(const_cast<char*>(a.c_str()));
  argv.push_back(nullptr);
  std::vector<char*> envp;
  for (const auto& e : spec.env) envp.push_back(const_cast<char*>(e.c_str()));
  envp.push_back(nullptr);
  std::string cwd = spec.cwd.string();
  std::string stdin_path = spec.stdin_file.empty() ? "/dev/null" : spec.stdin_file.string();

  int out_pipe[2];
  int err_pipe[2];
  if (::pipe2(out_pipe, O_CLOEXEC) != 0) throw std::system_error(errno, std::generic_category(), "pipe");
  if (::pipe2(err_pipe, O_CLOEXEC) != 0) {
    ::close(out_pipe[0]);
    ::close(out_pipe[1]);
    throw std::system_error(errno, std::generic_category(), "pipe");
  }
  detail::Fd out_r(out_pipe[0]), out_w(out_pipe[1]), err_r(err_pipe[0]), err_w(err_pipe[1]);

  auto start = clock::now();
  pid_t pid = ::fork();
  if (pid < 0) throw std::system_error(errno, std::generic_category(), "fork");

  if (pid == 0) {
    ::setpgid(0, 0);
    if (!cwd.empty() && ::chdir(cwd.c_str()) != 0) ::_exit(126);
    int in = ::open(stdin_path.c_str(), O_RDONLY);
    if (in < 0) ::_exit(126);
    ::dup2(in, 0);
    ::dup2(out_pipe[1], 1);
    ::dup2(err_pipe[1], 2);
    ::execve(program.c_str(), argv.data(), envp.data());
    static constexpr char msg[] = "exec failed\n";
    [[maybe_unused]] auto w = ::write(2, msg, sizeof(msg) - 1);
    ::_exit(127);
  }

  ::setpgid(pid, pid);
  out_w.reset();
  err_w.reset();

  detail::Capture out(spec.max_output_bytes), err(spec.max_output_bytes);
  ProcessResult result;
  auto deadline = start + spec.timeout;
  int status = 0;
  bool reaped = false;
  char buf[8192];

  auto drain = [&](detail::Fd& fd, detail::Capture& cap) {
    ssize_t n = ::read(fd.fd, buf, sizeof(buf));
    if (n > 0) {
      cap.append(buf, static_cast<std::size_t>(n));
    } else if (n == 0 || (errno != EINTR && errno != EAGAIN)) {
      fd.reset();
    }
  };

  while (out_r.fd >= 0 || err_r.fd >= 0 || !reaped) {
    if (!reaped) {
      siginfo_t info{};
      if (::waitid(P_PID, static_cast<id_t>(pid), &info, WEXITED | WNOHANG | WNOWAIT) == 0 && info.si_pid == pid) {
        result.duration = std::chrono::duration_cast<std::chrono::milliseconds>(clock::now() - start);
        // Stragglers that inherited the pipes would otherwise hold them open.
        // The leader is still unreaped here, so the group id cannot be reused.
        ::kill(-pid, SIGKILL);
        ::waitpid(pid, &status, 0);
        reaped = true;
      }
    }
    auto now = clock::now();
    if (!reaped && now >= deadline) {
      result.timed_out = true;
      ::kill(-pid, SIGKILL);
      ::waitpid(pid, &status, 0);
      reaped = true;
      result.duration = std::chrono::duration_cast<std::chrono::milliseconds>(clock::now() - start);
      continue;
    }

    pollfd fds[2];
    nfds_t nfds = 0;
    if (out_r.fd >= 0) fds[nfds++] = {out_r.fd, POLLIN, 0};
    if (err_r.fd >= 0) fds[nfds++] = {err_r.fd, POLLIN, 0};
    int wait_ms = 20;
    if (!reaped) {
      auto left = std::chrono::duration_cast<std::chrono::milliseconds>(deadline - now).count();
      wait_ms = static_cast<int>(std::clamp<long long>(left, 1, 20));
    }
    if (nfds == 0) {
      if (!reaped) ::poll(nullptr, 0, wait_ms);
      continue;
    }
    int ready = ::poll(fds, nfds, wait_ms);
    if (ready < 0 && errno != EINTR) break;
    if (ready <= 0) {
      // Once the child is gone, idle pipes mean nothing more is coming.
      if (reaped) {
        out_r.reset();
        err_r.reset();
      }
      continue;
    }
    for (nfds_t i = 0; i < nfds; ++i) {
      if (!(fds[i].revents & (POLLIN | POLLHUP | POLLERR))) continue;
      if (fds[i].fd == out_r.fd) drain(out_r, out);
      else if (fds[i].fd == err_r.fd) drain(err_r, err);
    }
  }

  if (WIFSIGNALED(status)) {
    result.signaled = true;
    result.signal = WTERMSIG(status);
    result.exit_code = 128 + result.signal;
  } else if (WIFEXITED(status)) {
    result.exit_code = WEXITSTATUS(status);
  }
  result.out_truncated = out.truncated();
  result.err_truncated = err.truncated();
  result.out = out.finish();
  result.err = err.finish();
  return result;
}

}  // namespace codefb::sandbox
