#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace hm {

// Every failure surfaced by the library derives from Error so the CLI can map
// it to exit code 1 with a single catch.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class MorphologyError : public Error { using Error::Error; };
class ParseError : public Error { using Error::Error; };
class SerializationError : public Error { using Error::Error; };
class TaggingError : public Error { using Error::Error; };
class NoTargetError : public Error { using Error::Error; };
class DistanceUndefined : public Error { using Error::Error; };
class ParameterError : public Error { using Error::Error; };
class AssemblyError : public Error { using Error::Error; };
class SelectionError : public Error { using Error::Error; };
class StratificationError : public Error { using Error::Error; };
class TrainError : public Error { using Error::Error; };
class MetricError : public Error { using Error::Error; };
class GenerationError : public Error { using Error::Error; };

class SchemaError : public Error {
 public:
  SchemaError(const std::string& msg, std::int64_t id)
      : Error(msg + " (id=" + std::to_string(id) + ")"), id_(id) {}
  explicit SchemaError(const std::string& msg) : Error(msg) {}
  std::int64_t id() const { return id_; }

 private:
  std::int64_t id_ = -1;
};

}  // namespace hm
