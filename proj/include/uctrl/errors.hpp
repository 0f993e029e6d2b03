#pragma once

#include <stdexcept>
#include <string>

namespace uctrl {

// Base for everything this library throws on purpose.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct DimensionMismatch : Error { using Error::Error; };
struct NotPositiveDefinite : Error { using Error::Error; };
struct NotSymmetric : Error { using Error::Error; };
struct NoConvergence : Error { using Error::Error; };
struct ZeroVector : Error { using Error::Error; };
struct NotUnitNorm : Error { using Error::Error; };
struct LengthMismatch : Error { using Error::Error; };
struct TapeMismatch : Error { using Error::Error; };
struct ShapeMismatch : Error { using Error::Error; };
struct IndexOutOfRange : Error { using Error::Error; };
struct NonFiniteValue : Error { using Error::Error; };
struct NonFiniteLoss : Error { using Error::Error; };
struct InvalidConfig : Error { using Error::Error; };
struct ConfigError : Error { using Error::Error; };
struct IoError : Error { using Error::Error; };
struct BadRecordSize : Error { using Error::Error; };

}  // namespace uctrl
