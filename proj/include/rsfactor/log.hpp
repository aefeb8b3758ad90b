#pragma once

/// \file log.hpp
/// Minimal stderr logger. The level is read once from the RSFACTOR_LOG
/// environment variable (debug|info|warn, default info).

#include <cstdlib>
#include <iostream>
#include <mutex>
#include <string>
#include <string_view>

namespace rsfactor::log {

enum class Level { debug = 0, info = 1, warn = 2 };

inline Level level() {
  static const Level lvl = [] {
    const char* env = std::getenv("RSFACTOR_LOG");
    if (env == nullptr) return Level::info;
    std::string_view v(env);
    if (v == "debug") return Level::debug;
    if (v == "warn") return Level::warn;
    return Level::info;
  }();
  return lvl;
}

inline void emit(Level lvl, std::string_view tag, const std::string& msg) {
  if (lvl < level()) return;
  static std::mutex mu;
  std::lock_guard<std::mutex> lock(mu);
  std::cerr << "[" << tag << "] " << msg << "\n";
}

inline void debug(const std::string& msg) { emit(Level::debug, "debug", msg); }
inline void info(const std::string& msg) { emit(Level::info, "info", msg); }
inline void warn(const std::string& msg) { emit(Level::warn, "warn", msg); }

}  // namespace rsfactor::log
