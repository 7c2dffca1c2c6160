#include "matchlearn/diagnostics.hpp"

#include <mutex>

namespace matchlearn {
namespace {

std::mutex& handler_mutex() {
  static std::mutex m;
  return m;
}

WarningHandler& handler_slot() {
  static WarningHandler h;
  return h;
}

}  // namespace

void set_warning_handler(WarningHandler handler) {
  std::lock_guard lock(handler_mutex());
  handler_slot() = std::move(handler);
}

void warn(const std::string& code, const std::string& message) {
  std::lock_guard lock(handler_mutex());
  if (handler_slot()) handler_slot()(code, message);
}

}  // namespace matchlearn
