#pragma once

#include <sstream>
#include <stdexcept>
#include <string>

namespace xmodal {

// Runtime failure inside a pipeline stage (divergence, metric precondition,
// zero-norm vector, ...). The CLI maps this to exit code 1.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Malformed or invalid input (file format violations, bad configuration).
// The CLI maps this to exit code 2.
class InputError : public Error {
 public:
  using Error::Error;
};

template <class... Args>
std::string format_msg(Args&&... args) {
  std::ostringstream os;
  (os << ... << args);
  return os.str();
}

}  // namespace xmodal
