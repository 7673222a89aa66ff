#pragma once

#include <string_view>

namespace gkeb {

// Diagnostics go to stderr; tests and the Python module may silence them.
void log_warning(std::string_view message);
void set_warnings_enabled(bool enabled);
bool warnings_enabled();

}  // namespace gkeb
