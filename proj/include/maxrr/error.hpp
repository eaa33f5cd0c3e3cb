#pragma once

#include <stdexcept>
#include <string>

namespace maxrr {

// Base class for all toolkit errors.
struct Error : std::runtime_error {
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// data
struct MagicMismatch : Error { using Error::Error; };
struct CountMismatch : Error { using Error::Error; };
struct TruncatedFile : Error { using Error::Error; };
struct InvalidParam : Error { using Error::Error; };
struct UnknownId : Error { using Error::Error; };

// nn
struct ShapeMismatch : Error { using Error::Error; };
struct EmptyDataset : Error { using Error::Error; };
struct DivergedLoss : Error { using Error::Error; };

// svm
struct DegenerateLabels : Error { using Error::Error; };
struct NoConvergence : Error { using Error::Error; };

// ranking
struct KOutOfRange : Error { using Error::Error; };

// pipeline
struct EmptyRemainder : Error { using Error::Error; };

// audit
struct MissingCalibration : Error { using Error::Error; };
struct OverlappingPools : Error { using Error::Error; };
struct EmptyPool : Error { using Error::Error; };
struct SingleClass : Error { using Error::Error; };
struct RunMismatch : Error { using Error::Error; };

// io
struct BadModelFile : Error { using Error::Error; };

}  // namespace maxrr
