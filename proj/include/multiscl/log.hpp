#pragma once

#include <string_view>

namespace multiscl::logging {

enum class Level { Debug = 0, Info = 1, Warn = 2, Error = 3, Off = 4 };

void set_level(Level level);
Level level();

void info(std::string_view msg);
void warn(std::string_view msg);
// Emits `msg` only the first time `key` is seen in this process.
void warn_once(std::string_view key, std::string_view msg);

}  // namespace multiscl::logging
