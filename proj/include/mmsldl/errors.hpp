#ifndef MMSLDL_ERRORS_HPP
#define MMSLDL_ERRORS_HPP

#include <stdexcept>
#include <string>

namespace mmsldl {

// Base class for everything thrown by this library.
class error : public std::runtime_error {
public:
  explicit error(const std::string& msg) : std::runtime_error(msg) {}
};

// Malformed data handed to an operation (shapes, non-finite entries, ...).
class invalid_input : public error {
public:
  using error::error;
};

// A scalar parameter outside its allowed range.
class invalid_parameter : public error {
public:
  using error::error;
};

// An operation called on an object whose state forbids it.
class invalid_state : public error {
public:
  using error::error;
};

// Inconsistent configuration (count mismatches, bad grids, ...).
class invalid_configuration : public error {
public:
  using error::error;
};

// A dataset directory that violates the expected layout.
class invalid_dataset : public error {
public:
  using error::error;
};

// Filesystem / decoding problems while reading or writing data.
class io_error : public error {
public:
  using error::error;
};

// A numeric routine failed; the message carries iterate diagnostics.
class numerical_failure : public error {
public:
  using error::error;
};

// Model archive problems, split by kind so callers can react precisely.
class archive_error : public io_error {
public:
  using io_error::io_error;
};

class version_mismatch : public archive_error {
public:
  using archive_error::archive_error;
};

class checksum_mismatch : public archive_error {
public:
  using archive_error::archive_error;
};

class truncated_blob : public archive_error {
public:
  using archive_error::archive_error;
};

}  // namespace mmsldl

#endif
