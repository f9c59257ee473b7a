#include "mahe/subprocess.hpp"

#include <cerrno>
#include <chrono>
#include <csignal>
#include <cstring>

#include <fcntl.h>
#include <poll.h>
#include <sys/wait.h>
#include <unistd.h>

#include "mahe/errors.hpp"

namespace mahe {

namespace {

void ignore_sigpipe_once() {
  static const bool done = [] {
    struct sigaction sa {};
    sa.sa_handler = SIG_IGN;
    sigaction(SIGPIPE, &sa, nullptr);
    return true;
  }();
  (void)done;
}

double now_seconds() {
  return std::chrono::duration<double>(std::chrono::steady_clock::now().time_since_epoch())
      .count();
}

}  // namespace

Subprocess::Subprocess(const std::string& command) : command_(command) {
  ignore_sigpipe_once();
  int to_child[2];
  int from_child[2];
  if (pipe(to_child) != 0 || pipe(from_child) != 0)
    throw PredictorError("pipe() failed: " + std::string(std::strerror(errno)));
  const int pid = fork();
  if (pid < 0) throw PredictorError("fork() failed: " + std::string(std::strerror(errno)));
  if (pid == 0) {
    dup2(to_child[0], STDIN_FILENO);
    dup2(from_child[1], STDOUT_FILENO);
    close(to_child[0]);
    close(to_child[1]);
    close(from_child[0]);
    close(from_child[1]);
    execl("/bin/sh", "sh", "-c", command.c_str(), static_cast<char*>(nullptr));
    _exit(127);
  }
  pid_ = pid;
  close(to_child[0]);
  close(from_child[1]);
  in_fd_ = to_child[1];
  out_fd_ = from_child[0];
}

Subprocess::~Subprocess() {
  if (in_fd_ >= 0) close(in_fd_);
  if (out_fd_ >= 0) close(out_fd_);
  if (pid_ > 0 && !reaped_) {
    // give the child a moment to exit on EOF, then force it
    int status = 0;
    for (int i = 0; i < 50; ++i) {
      const int r = waitpid(pid_, &status, WNOHANG);
      if (r == pid_) {
        reaped_ = true;
        break;
      }
      usleep(10'000);
    }
    if (!reaped_) {
      kill(pid_, SIGKILL);
      waitpid(pid_, &status, 0);
    }
  }
}

void Subprocess::write_line(const std::string& line) {
  std::string data = line;
  data.push_back('\n');
  std::size_t off = 0;
  while (off < data.size()) {
    const ssize_t n = write(in_fd_, data.data() + off, data.size() - off);
    if (n < 0) {
      if (errno == EINTR) continue;
      throw PredictorError("write to predictor process failed (" +
                           std::string(std::strerror(errno)) + "): " + command_);
    }
    off += static_cast<std::size_t>(n);
  }
}

std::optional<std::string> Subprocess::read_line(double timeout_seconds) {
  const double deadline = now_seconds() + timeout_seconds;
  for (;;) {
    const auto nl = buffer_.find('\n');
    if (nl != std::string::npos) {
      std::string line = buffer_.substr(0, nl);
      buffer_.erase(0, nl + 1);
      if (!line.empty() && line.back() == '\r') line.pop_back();
      return line;
    }
    if (eof_) {
      if (buffer_.empty()) return std::nullopt;
      std::string line = std::move(buffer_);
      buffer_.clear();
      return line;
    }
    const double remain = deadline - now_seconds();
    if (remain <= 0.0)
      throw PredictorError("predictor timed out after " + std::to_string(timeout_seconds) +
                           " s: " + command_);
    struct pollfd pfd {};
    pfd.fd = out_fd_;
    pfd.events = POLLIN;
    const int pr = poll(&pfd, 1, static_cast<int>(remain * 1000.0) + 1);
    if (pr < 0) {
      if (errno == EINTR) continue;
      throw PredictorError("poll on predictor failed: " + std::string(std::strerror(errno)));
    }
    if (pr == 0) continue;
    char chunk[4096];
    const ssize_t n = read(out_fd_, chunk, sizeof(chunk));
    if (n < 0) {
      if (errno == EINTR) continue;
      throw PredictorError("read from predictor failed: " + std::string(std::strerror(errno)));
    }
    if (n == 0)
      eof_ = true;
    else
      buffer_.append(chunk, static_cast<std::size_t>(n));
  }
}

void Subprocess::close_stdin() {
  if (in_fd_ >= 0) {
    close(in_fd_);
    in_fd_ = -1;
  }
}

bool Subprocess::exited(int* code) {
  if (!reaped_) {
    int status = 0;
    const int r = waitpid(pid_, &status, WNOHANG);
    if (r == pid_) {
      reaped_ = true;
      exit_code_ = WIFEXITED(status) ? WEXITSTATUS(status) : 128 + WTERMSIG(status);
    }
  }
  if (reaped_ && code) *code = exit_code_;
  return reaped_;
}

}  // namespace mahe
