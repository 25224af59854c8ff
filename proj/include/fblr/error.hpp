#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace fblr {

enum class ErrorKind {
  invalid_argument,
  dimension,
  numeric,
  precondition,
  unsupported_spec,
  ill_posed,
  degenerate_gcv,
  no_valid_lambda,
  degenerate_form,
  degenerate_step_norm,
  degenerate_iterate,
  insufficient_sample,
  unsupported_setting,
  internal,
  io,
  data,
};

std::string_view to_string(ErrorKind kind);

// Every failure raised by the library carries a kind so callers (the CLI in
// particular) can map it to an exit code without parsing messages.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(std::string(to_string(kind)) + ": " + what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

inline void require(bool cond, ErrorKind kind, const std::string& what) {
  if (!cond) throw Error(kind, what);
}

}  // namespace fblr
