#pragma once

#include <optional>
#include <string>

namespace mahe {

// Line-oriented child process over stdin/stdout pipes. Commands run via
// /bin/sh -c. Reads are buffered with a poll() deadline.
class Subprocess {
 public:
  explicit Subprocess(const std::string& command);
  ~Subprocess();

  Subprocess(const Subprocess&) = delete;
  Subprocess& operator=(const Subprocess&) = delete;

  void write_line(const std::string& line);  // PredictorError on broken pipe
  // nullopt on EOF; PredictorError on timeout
  std::optional<std::string> read_line(double timeout_seconds);
  void close_stdin();
  bool exited(int* code = nullptr);  // non-blocking
  const std::string& command() const { return command_; }

 private:
  std::string command_;
  int pid_ = -1;
  int in_fd_ = -1;   // child stdin (we write)
  int out_fd_ = -1;  // child stdout (we read)
  std::string buffer_;
  bool eof_ = false;
  int exit_code_ = -1;
  bool reaped_ = false;
};

}  // namespace mahe
