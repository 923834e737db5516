#pragma once

#include <iostream>
#include <sstream>
#include <string>

namespace shrdlurn {

enum class LogLevel { quiet = 0, info = 1, debug = 2 };

inline LogLevel& log_level() {
  static LogLevel level = LogLevel::info;
  return level;
}

template <typename... Args>
void log_info(const Args&... args) {
  if (log_level() < LogLevel::info) return;
  std::ostringstream os;
  (os << ... << args);
  std::clog << os.str() << '\n';
}

template <typename... Args>
void log_debug(const Args&... args) {
  if (log_level() < LogLevel::debug) return;
  std::ostringstream os;
  (os << ... << args);
  std::clog << os.str() << '\n';
}

}  // namespace shrdlurn
