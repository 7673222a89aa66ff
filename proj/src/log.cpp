#include "gkeb/log.hpp"

#include <atomic>
#include <iostream>
#include <mutex>

namespace gkeb {

namespace {
std::atomic<bool> g_enabled{true};
std::mutex g_mutex;
}  // namespace

void log_warning(std::string_view message) {
  if (!g_enabled.load()) return;
  std::lock_guard<std::mutex> lock(g_mutex);
  std::cerr << "gkeb: warning: " << message << '\n';
}

void set_warnings_enabled(bool enabled) { g_enabled.store(enabled); }
bool warnings_enabled() { return g_enabled.load(); }

}  // namespace gkeb
