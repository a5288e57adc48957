#pragma once

#include <string_view>

namespace pathgrad {

/// Writes "pathgrad: warning: <message>" to stderr unless PATHGRAD_QUIET is set.
void Warn(std::string_view message);

}  // namespace pathgrad
