#ifndef PLAYPRUNE_ERROR_HPP
#define PLAYPRUNE_ERROR_HPP

#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>

namespace playprune {

/// Raised on every contract violation the library detects (bad shapes,
/// malformed files, invalid configuration values).
class Error : public std::runtime_error {
public:
  explicit Error(const std::string &what) : std::runtime_error(what) {}
};

namespace detail {

template <typename... Args> [[noreturn]] inline void fail(Args &&...args) {
  std::ostringstream os;
  (os << ... << std::forward<Args>(args));
  throw Error(os.str());
}

} // namespace detail

#define PLAYPRUNE_CHECK(cond, ...)                                             \
  do {                                                                         \
    if (!(cond))                                                               \
      ::playprune::detail::fail(__VA_ARGS__);                                  \
  } while (0)

} // namespace playprune

#endif // PLAYPRUNE_ERROR_HPP
