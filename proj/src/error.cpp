#include "odm/error.hpp"

#include <iostream>
#include <mutex>
#include <utility>

namespace odm {
namespace {

std::mutex& handler_mutex() {
  static std::mutex m;
  return m;
}

WarningHandler& handler() {
  static WarningHandler h = [](const std::string& msg) { std::cerr << "warning: " << msg << '\n'; };
  return h;
}

}  // namespace

WarningHandler set_warning_handler(WarningHandler h) {
  std::lock_guard lock(handler_mutex());
  return std::exchange(handler(), std::move(h));
}

void warn(const std::string& message) {
  WarningHandler h;
  {
    std::lock_guard lock(handler_mutex());
    h = handler();
  }
  if (h) h(message);
}

}  // namespace odm
