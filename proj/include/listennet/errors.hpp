#pragma once

#include <stdexcept>
#include <string>

namespace listennet {

// Error taxonomy used across the engine. Shape/size errors come from tensor
// and layer geometry, config errors from invalid hyperparameters, data errors
// from non-finite or malformed inputs, format errors from on-disk files,
// usage errors from API misuse (e.g. consuming a backward cache twice).

struct ShapeError : std::runtime_error {
  explicit ShapeError(const std::string& msg) : std::runtime_error("shape error: " + msg) {}
};

struct SizeError : std::runtime_error {
  explicit SizeError(const std::string& msg) : std::runtime_error("size error: " + msg) {}
};

struct ConfigError : std::runtime_error {
  explicit ConfigError(const std::string& msg) : std::runtime_error("config error: " + msg) {}
};

struct DataError : std::runtime_error {
  explicit DataError(const std::string& msg) : std::runtime_error("data error: " + msg) {}
};

struct FormatError : std::runtime_error {
  explicit FormatError(const std::string& msg) : std::runtime_error("format error: " + msg) {}
};

struct UsageError : std::runtime_error {
  explicit UsageError(const std::string& msg) : std::runtime_error("usage error: " + msg) {}
};

struct MetricError : std::runtime_error {
  explicit MetricError(const std::string& msg) : std::runtime_error("metric error: " + msg) {}
};

}  // namespace listennet
