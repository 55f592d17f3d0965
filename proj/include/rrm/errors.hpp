#pragma once

#include <sstream>
#include <stdexcept>
#include <string>

namespace rrm {

/// Base class for all library errors.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Tensor dimension mismatches (matmul inner dims, batch row counts, ...).
struct ShapeError : Error {
  using Error::Error;
};

/// Violated call contract (non-scalar backward root, non-one-hot label row).
struct ContractError : Error {
  using Error::Error;
};

/// Degenerate numeric input (zero-norm row, log of a nonpositive value).
struct DomainError : Error {
  using Error::Error;
};

/// Invalid configuration value or key.
struct ConfigError : Error {
  using Error::Error;
};

/// Malformed external file (IDX payload, config text, checkpoint).
struct ParseError : Error {
  using Error::Error;
};

namespace detail {

inline void msg_cat(std::ostringstream&) {}

template <typename T, typename... Rest>
void msg_cat(std::ostringstream& oss, const T& head, const Rest&... rest) {
  oss << head;
  msg_cat(oss, rest...);
}

// Builds an error message from heterogeneous parts.
template <typename... Parts>
std::string msg(const Parts&... parts) {
  std::ostringstream oss;
  msg_cat(oss, parts...);
  return oss.str();
}

}  // namespace detail

}  // namespace rrm
