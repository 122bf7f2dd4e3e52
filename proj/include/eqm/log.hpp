#pragma once

#include <cstdio>
#include <string>

#include "eqm/errors.hpp"

namespace eqm::log {

enum class Level { debug = 0, info = 1, warn = 2, error = 3, off = 4 };

inline Level& threshold() {
  static Level level = Level::warn;
  return level;
}

inline void write(Level level, const char* tag, const std::string& message) {
  if (level < threshold()) return;
  std::fprintf(stderr, "[%s] %s\n", tag, message.c_str());
}

inline void debug(const std::string& m) { write(Level::debug, "debug", m); }
inline void info(const std::string& m) { write(Level::info, "info", m); }
inline void warn(const std::string& m) { write(Level::warn, "warn", m); }
inline void error(const std::string& m) { write(Level::error, "error", m); }

inline Level parse_level(const std::string& name) {
  if (name == "debug") return Level::debug;
  if (name == "info") return Level::info;
  if (name == "warn") return Level::warn;
  if (name == "error") return Level::error;
  if (name == "off") return Level::off;
  raise("log.BadLevel", "unknown log level '" + name + "'");
}

}  // namespace eqm::log
