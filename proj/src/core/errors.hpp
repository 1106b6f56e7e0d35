#pragma once

#include <stdexcept>
#include <string>

namespace stn {

// Status codes double as CLI exit codes.
enum class Status : int {
  ok = 0,
  config_error = 2,
  data_error = 3,
  numeric_error = 4,
  internal_error = 5,
};

class Error : public std::runtime_error {
 public:
  Error(Status status, const std::string& msg)
      : std::runtime_error(msg), status_(status) {}
  Status status() const { return status_; }

 private:
  Status status_;
};

struct ConfigError : Error {
  explicit ConfigError(const std::string& msg) : Error(Status::config_error, msg) {}
};

struct DataError : Error {
  explicit DataError(const std::string& msg) : Error(Status::data_error, msg) {}
};

struct NumericError : Error {
  explicit NumericError(const std::string& msg) : Error(Status::numeric_error, msg) {}
};

struct InternalError : Error {
  explicit InternalError(const std::string& msg) : Error(Status::internal_error, msg) {}
};

}  // namespace stn
