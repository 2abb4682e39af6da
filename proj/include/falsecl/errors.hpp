#pragma once

#include <stdexcept>
#include <string>

namespace falsecl {

// Every library failure derives from Error so callers can catch one type.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// A row whose norm is too small to normalize (degenerate embedding).
struct ZeroRow : Error {
  using Error::Error;
};

struct ShapeMismatch : Error {
  using Error::Error;
};

struct BadConfig : Error {
  using Error::Error;
};

/// File content does not match the expected layout (magic, version, length).
struct FormatError : Error {
  using Error::Error;
};

struct IoError : Error {
  using Error::Error;
};

}  // namespace falsecl
