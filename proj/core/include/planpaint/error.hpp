#pragma once

#include <cstdio>
#include <stdexcept>
#include <string>

namespace planpaint {

// Base error for all library failures (I/O, malformed data, bad configs).
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// Internal-consistency failure; always indicates a bug, not bad input.
class InvariantError : public Error {
 public:
  explicit InvariantError(const std::string& msg) : Error(msg) {}
};

namespace detail {
[[noreturn]] inline void check_failed(const char* expr, const char* file,
                                      int line, const std::string& msg) {
  std::string full = std::string("invariant failed: ") + expr + " at " + file +
                     ":" + std::to_string(line);
  if (!msg.empty()) full += " — " + msg;
  throw InvariantError(full);
}
}  // namespace detail

// PP_CHECK is used for invariants that must hold in release builds too:
// violations are programming errors we want surfaced, never optimized out.
#define PP_CHECK(expr)                                                  \
  do {                                                                  \
    if (!(expr))                                                        \
      ::planpaint::detail::check_failed(#expr, __FILE__, __LINE__, ""); \
  } while (0)

#define PP_CHECK_MSG(expr, msg)                                            \
  do {                                                                     \
    if (!(expr))                                                           \
      ::planpaint::detail::check_failed(#expr, __FILE__, __LINE__, (msg)); \
  } while (0)

}  // namespace planpaint
