#pragma once

#include <sstream>
#include <string>

namespace mmpd {

enum class LogLevel { Error = 0, Warn = 1, Info = 2, Debug = 3 };

// Current level, read once from the MMPD_LOG environment variable
// (error|warn|info|debug); defaults to info.
LogLevel log_level();

void log_line(LogLevel level, const std::string& msg);

namespace detail {
template <typename... Args>
std::string concat(Args&&... args) {
  std::ostringstream os;
  (os << ... << args);
  return os.str();
}
}  // namespace detail

template <typename... Args>
void log_error(Args&&... args) {
  log_line(LogLevel::Error, detail::concat(std::forward<Args>(args)...));
}
template <typename... Args>
void log_warn(Args&&... args) {
  log_line(LogLevel::Warn, detail::concat(std::forward<Args>(args)...));
}
template <typename... Args>
void log_info(Args&&... args) {
  log_line(LogLevel::Info, detail::concat(std::forward<Args>(args)...));
}
template <typename... Args>
void log_debug(Args&&... args) {
  log_line(LogLevel::Debug, detail::concat(std::forward<Args>(args)...));
}

}  // namespace mmpd
