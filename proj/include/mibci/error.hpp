#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace mibci {

enum class ErrorKind {
  MalformedHeader,
  ShapeMismatch,
  NonFiniteSample,
  IoFailure,
  InvalidBand,
  InvalidOrder,
  RateMismatch,
  DegenerateTrial,
  EmptyClass,
  RankDeficient,
  MTooLarge,
  SingleClass,
  SingularCovariance,
  DimensionMismatch,
  TooFewTrials,
  UnknownChannel,
  WindowTooLong,
  BandOutOfRange,
  InvalidParams,
  NonMonotoneTime,
  BadChecksum,
  ModelMontageMismatch,
};

constexpr std::string_view to_string(ErrorKind k) {
  switch (k) {
    case ErrorKind::MalformedHeader: return "MalformedHeader";
    case ErrorKind::ShapeMismatch: return "ShapeMismatch";
    case ErrorKind::NonFiniteSample: return "NonFiniteSample";
    case ErrorKind::IoFailure: return "IoFailure";
    case ErrorKind::InvalidBand: return "InvalidBand";
    case ErrorKind::InvalidOrder: return "InvalidOrder";
    case ErrorKind::RateMismatch: return "RateMismatch";
    case ErrorKind::DegenerateTrial: return "DegenerateTrial";
    case ErrorKind::EmptyClass: return "EmptyClass";
    case ErrorKind::RankDeficient: return "RankDeficient";
    case ErrorKind::MTooLarge: return "MTooLarge";
    case ErrorKind::SingleClass: return "SingleClass";
    case ErrorKind::SingularCovariance: return "SingularCovariance";
    case ErrorKind::DimensionMismatch: return "DimensionMismatch";
    case ErrorKind::TooFewTrials: return "TooFewTrials";
    case ErrorKind::UnknownChannel: return "UnknownChannel";
    case ErrorKind::WindowTooLong: return "WindowTooLong";
    case ErrorKind::BandOutOfRange: return "BandOutOfRange";
    case ErrorKind::InvalidParams: return "InvalidParams";
    case ErrorKind::NonMonotoneTime: return "NonMonotoneTime";
    case ErrorKind::BadChecksum: return "BadChecksum";
    case ErrorKind::ModelMontageMismatch: return "ModelMontageMismatch";
  }
  return "Unknown";
}

/// Every failure raised by the library carries a machine-readable kind.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(std::string(to_string(kind)) + ": " + what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& what) { throw Error(kind, what); }

}  // namespace mibci
