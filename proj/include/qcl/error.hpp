#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace qcl {

enum class ErrorKind {
  kSingularPoint,
  kNonDifferentiable,
  kGridTooCoarse,
  kPacketClipped,
  kTimestepTooLarge,
  kSingularGridPoint,
  kBoundaryContamination,
  kDimensionTooHigh,
  kQuadratureWindowExceedsBox,
  kSupportTouchesSingularSet,
  kSupportViolation,
  kSingularApproach,
  kDeltaBelowResolution,
  kDegenerateFit,
  kSchemaVersionMismatch,
  kCorruptFile,
  kConfigInvalid,
  kInvalidArgument,
};

std::string_view to_string(ErrorKind kind);

// Single exception type for the library; callers switch on kind().
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(std::string(to_string(kind)) + ": " + what),
        kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

// Raised by config parsing; carries the offending key path (e.g. "packet.x0").
class ConfigError : public Error {
 public:
  ConfigError(std::string key, const std::string& what)
      : Error(ErrorKind::kConfigInvalid, key + ": " + what), key_(std::move(key)) {}

  const std::string& key() const noexcept { return key_; }

 private:
  std::string key_;
};

}  // namespace qcl
