#pragma once

// Error taxonomy.  Bad or malformed inputs raise InputError, blowing a
// configured enumeration budget raises ResourceError, and InternalError marks
// states the underlying math proves unreachable -- hitting one means a logic
// bug, so the guard stays active in release builds.

#include <stdexcept>
#include <string>

namespace specverify {

struct InputError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct ResourceError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct InternalError : std::logic_error {
  using std::logic_error::logic_error;
};

inline void internal_check(bool ok, const char* what) {
  if (!ok) throw InternalError(what);
}

}  // namespace specverify
