#pragma once

#include <atomic>
#include <iostream>
#include <string_view>

namespace plab {

inline void warn(std::string_view msg) { std::cerr << "plab: warning: " << msg << '\n'; }

/// Emits `msg` the first time `flag` is seen unset.
inline void warn_once(std::atomic<bool>& flag, std::string_view msg) {
  if (!flag.exchange(true, std::memory_order_relaxed)) warn(msg);
}

}  // namespace plab
