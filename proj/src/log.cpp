#include "multiscl/log.hpp"

#include <atomic>
#include <iostream>
#include <mutex>
#include <set>
#include <string>

namespace multiscl::logging {
namespace {

std::atomic<Level> g_level{Level::Info};
std::mutex g_mu;

void emit(const char* tag, std::string_view msg) {
  std::lock_guard lock(g_mu);
  std::clog << '[' << tag << "] " << msg << '\n';
}

}  // namespace

void set_level(Level l) { g_level = l; }
Level level() { return g_level; }

void info(std::string_view msg) {
  if (g_level.load() <= Level::Info) emit("info", msg);
}

void warn(std::string_view msg) {
  if (g_level.load() <= Level::Warn) emit("warn", msg);
}

void warn_once(std::string_view key, std::string_view msg) {
  static std::set<std::string, std::less<>> seen;
  {
    std::lock_guard lock(g_mu);
    if (!seen.emplace(key).second) return;
  }
  warn(msg);
}

}  // namespace multiscl::logging
