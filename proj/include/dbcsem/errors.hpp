#pragma once

#include <stdexcept>
#include <string>

namespace dbcsem {

struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// invalid configuration or incompatible shapes
struct ConfigError : Error {
  using Error::Error;
};

// missing or corrupt dataset files
struct IngestError : Error {
  using Error::Error;
};

// statistic with no defined value (zero variance, zero matrix)
struct UndefinedError : Error {
  using Error::Error;
};

// optional external component (codec adapter) not usable
struct UnavailableError : Error {
  using Error::Error;
};

// checkpoint header or architecture mismatch
struct VersionError : Error {
  using Error::Error;
};

// training stopped on a non-finite loss or an I/O failure
struct TrainingAborted : Error {
  using Error::Error;
};

}  // namespace dbcsem
