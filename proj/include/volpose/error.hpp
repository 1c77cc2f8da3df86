#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace volpose {

enum class ErrorKind {
  DegenerateDepth,
  EmptyRig,
  InvalidCamera,
  ChannelMismatch,
  NonPositiveSigma,
  AllZeroHeatmap,
  ShapeMismatch,
  AllZeroWeights,
  NonPSDCovariance,
  LengthMismatch,
  WorkspaceOverflow,
  ConfigError,
  IoError,
};

constexpr std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::DegenerateDepth: return "DegenerateDepth";
    case ErrorKind::EmptyRig: return "EmptyRig";
    case ErrorKind::InvalidCamera: return "InvalidCamera";
    case ErrorKind::ChannelMismatch: return "ChannelMismatch";
    case ErrorKind::NonPositiveSigma: return "NonPositiveSigma";
    case ErrorKind::AllZeroHeatmap: return "AllZeroHeatmap";
    case ErrorKind::ShapeMismatch: return "ShapeMismatch";
    case ErrorKind::AllZeroWeights: return "AllZeroWeights";
    case ErrorKind::NonPSDCovariance: return "NonPSDCovariance";
    case ErrorKind::LengthMismatch: return "LengthMismatch";
    case ErrorKind::WorkspaceOverflow: return "WorkspaceOverflow";
    case ErrorKind::ConfigError: return "ConfigError";
    case ErrorKind::IoError: return "IoError";
  }
  return "Unknown";
}

// Every failure raised by the library carries a machine-readable kind.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(std::string(to_string(kind)) + ": " + what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

}  // namespace volpose
