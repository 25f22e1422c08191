#pragma once

#include <stdexcept>
#include <string>

namespace wildfire {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Raised when a raster's band layout disagrees with the channel schema.
class SchemaMismatchError : public Error {
 public:
  using Error::Error;
};

// Unparsable file names, dates or file contents.
class FormatError : public Error {
 public:
  using Error::Error;
};

class EmptyEventError : public Error {
 public:
  using Error::Error;
};

class DuplicateDateError : public Error {
 public:
  using Error::Error;
};

class LookupError : public Error {
 public:
  using Error::Error;
};

// Fold protocol cannot be constructed for the given years/events.
class ProtocolError : public Error {
 public:
  using Error::Error;
};

// Invalid model, training or command configuration. `field` names the
// offending key when known.
class ConfigError : public Error {
 public:
  explicit ConfigError(const std::string& message, std::string field = {})
      : Error(message), field_(std::move(field)) {}
  const std::string& field() const { return field_; }

 private:
  std::string field_;
};

class ShapeError : public Error {
 public:
  using Error::Error;
};

class CheckpointError : public Error {
 public:
  using Error::Error;
};

}  // namespace wildfire
