#include "pathgrad/log.h"

#include <cstdlib>
#include <iostream>
#include <mutex>

namespace pathgrad {

void Warn(std::string_view message) {
  if (std::getenv("PATHGRAD_QUIET")) return;
  static std::mutex mu;
  std::lock_guard lock(mu);
  std::cerr << "pathgrad: warning: " << message << '\n';
}

}  // namespace pathgrad
