#pragma once

#include <cstdio>
#include <cstdlib>
#include <mutex>
#include <string>

namespace morphoeval {

enum class LogLevel { error = 0, warn = 1, info = 2, debug = 3 };

namespace detail {

inline LogLevel parse_log_level(const char* s) {
  if (!s) return LogLevel::warn;
  std::string v(s);
  if (v == "error") return LogLevel::error;
  if (v == "warn" || v == "warning") return LogLevel::warn;
  if (v == "info") return LogLevel::info;
  if (v == "debug") return LogLevel::debug;
  return LogLevel::warn;
}

inline LogLevel& log_level() {
  static LogLevel level = parse_log_level(std::getenv("MORPHOEVAL_LOG"));
  return level;
}

inline std::mutex& log_mutex() {
  static std::mutex m;
  return m;
}

inline const char* level_tag(LogLevel l) {
  switch (l) {
    case LogLevel::error: return "error";
    case LogLevel::warn: return "warn";
    case LogLevel::info: return "info";
    default: return "debug";
  }
}

}  // namespace detail

inline void set_log_level(LogLevel l) { detail::log_level() = l; }

inline void log_message(LogLevel level, const std::string& msg) {
  if (level > detail::log_level()) return;
  std::lock_guard<std::mutex> lock(detail::log_mutex());
  std::fprintf(stderr, "[morphoeval %s] %s\n", detail::level_tag(level), msg.c_str());
}

inline void log_error(const std::string& msg) { log_message(LogLevel::error, msg); }
inline void log_warn(const std::string& msg) { log_message(LogLevel::warn, msg); }
inline void log_info(const std::string& msg) { log_message(LogLevel::info, msg); }
inline void log_debug(const std::string& msg) { log_message(LogLevel::debug, msg); }

}  // namespace morphoeval
