#include "mahe/common.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <iostream>
#include <mutex>

namespace mahe {

std::string format_double(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

std::string format_double(double v, int significant) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.*g", significant, v);
  return buf;
}

double logit(double p, double eps) {
  const double q = std::clamp(p, eps, 1.0 - eps);
  return std::log(q / (1.0 - q));
}

LogLevel log_level() {
  static const LogLevel level = [] {
    const char* env = std::getenv("MAHE_LOG");
    if (!env) return LogLevel::warn;
    const std::string s(env);
    if (s == "debug") return LogLevel::debug;
    if (s == "info") return LogLevel::info;
    if (s == "warn") return LogLevel::warn;
    if (s == "error") return LogLevel::error;
    return LogLevel::warn;
  }();
  return level;
}

void log(LogLevel level, const std::string& msg) {
  if (level < log_level()) return;
  static std::mutex mu;
  static const char* names[] = {"debug", "info", "warn", "error"};
  std::lock_guard<std::mutex> lock(mu);
  std::cerr << "[mahe:" << names[static_cast<int>(level)] << "] " << msg << "\n";
}

}  // namespace mahe
