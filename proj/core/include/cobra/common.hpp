#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace cobra {

// Index of a node in a NodeArena. Indices stay valid for the lifetime of the
// arena; node storage is never recycled while a computation is running.
using NodeIndex = int32_t;
inline constexpr NodeIndex kNoNode = -1;

enum class PercolationMode : uint8_t { BestCase, WorstCase };

inline const char* to_string(PercolationMode m) {
  return m == PercolationMode::BestCase ? "best" : "worst";
}

// Raised by PoisonableStore when a read hits a poisoned cell. Worker threads
// convert it into their failure path; it never escapes a computation.
struct PoisonFault {
  size_t index;
};

// Raised from a kernel safe point when an injected failure token is pending.
struct InjectedFault {};

// A mistake in the user program (double join, fork from a continuation,
// out-of-scope handle misuse). Propagates out of the computation after the
// workers quiesce.
class UserProgramError : public std::runtime_error {
 public:
  explicit UserProgramError(const std::string& what) : std::runtime_error(what) {}
};

// The computation could not make progress within the configured restart
// budget (e.g. a poisoned input cell that no task ever rewrites).
class UnrecoverableFailure : public std::runtime_error {
 public:
  explicit UnrecoverableFailure(const std::string& what) : std::runtime_error(what) {}
};

// Always-on invariant check for cheap conditions on hot paths.
#define COBRA_CHECK(cond, msg)                                         \
  do {                                                                 \
    if (!(cond)) throw std::logic_error(std::string("invariant: ") + (msg)); \
  } while (0)

}  // namespace cobra
