#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace polyprobe {

enum class ErrorKind {
  // corpus
  MissingColumn,
  CueNotInSentence,
  TargetNotInSentence,
  ScaleViolation,
  DuplicatePairId,
  InvalidPair,
  NotMinimalPair,
  // trace store
  ShapeMismatch,
  UnknownSentence,
  CorruptPayload,
  NonFiniteValue,
  IoFailure,
  // kernels
  DegenerateVector,
  TooFewTokens,
  InvalidSpan,
  SpanOverlap,
  RowSumViolation,
  // stats
  ConstantPredictor,
  LengthMismatch,
  TooFewObservations,
  RankDeficientDesign,
  NonConvergence,
  SingularFactor,
  MismatchedObservations,
  // pipeline / cli
  InsufficientPairs,
  MissingTrace,
  GrainMismatch,
  MissingAnalysis,
  InvalidConfig,
};

constexpr std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::MissingColumn: return "MissingColumn";
    case ErrorKind::CueNotInSentence: return "CueNotInSentence";
    case ErrorKind::TargetNotInSentence: return "TargetNotInSentence";
    case ErrorKind::ScaleViolation: return "ScaleViolation";
    case ErrorKind::DuplicatePairId: return "DuplicatePairId";
    case ErrorKind::InvalidPair: return "InvalidPair";
    case ErrorKind::NotMinimalPair: return "NotMinimalPair";
    case ErrorKind::ShapeMismatch: return "ShapeMismatch";
    case ErrorKind::UnknownSentence: return "UnknownSentence";
    case ErrorKind::CorruptPayload: return "CorruptPayload";
    case ErrorKind::NonFiniteValue: return "NonFiniteValue";
    case ErrorKind::IoFailure: return "IoFailure";
    case ErrorKind::DegenerateVector: return "DegenerateVector";
    case ErrorKind::TooFewTokens: return "TooFewTokens";
    case ErrorKind::InvalidSpan: return "InvalidSpan";
    case ErrorKind::SpanOverlap: return "SpanOverlap";
    case ErrorKind::RowSumViolation: return "RowSumViolation";
    case ErrorKind::ConstantPredictor: return "ConstantPredictor";
    case ErrorKind::LengthMismatch: return "LengthMismatch";
    case ErrorKind::TooFewObservations: return "TooFewObservations";
    case ErrorKind::RankDeficientDesign: return "RankDeficientDesign";
    case ErrorKind::NonConvergence: return "NonConvergence";
    case ErrorKind::SingularFactor: return "SingularFactor";
    case ErrorKind::MismatchedObservations: return "MismatchedObservations";
    case ErrorKind::InsufficientPairs: return "InsufficientPairs";
    case ErrorKind::MissingTrace: return "MissingTrace";
    case ErrorKind::GrainMismatch: return "GrainMismatch";
    case ErrorKind::MissingAnalysis: return "MissingAnalysis";
    case ErrorKind::InvalidConfig: return "InvalidConfig";
  }
  return "Unknown";
}

/// Process exit codes used by the command-line tool.
enum ExitCode : int {
  kExitOk = 0,
  kExitValidation = 1,
  kExitNumerical = 2,
  kExitIo = 3,
};

constexpr int exit_code_for(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::IoFailure:
    case ErrorKind::MissingTrace:
    case ErrorKind::MissingAnalysis:
      return kExitIo;
    case ErrorKind::DegenerateVector:
    case ErrorKind::TooFewTokens:
    case ErrorKind::ConstantPredictor:
    case ErrorKind::TooFewObservations:
    case ErrorKind::RankDeficientDesign:
    case ErrorKind::NonConvergence:
    case ErrorKind::SingularFactor:
    case ErrorKind::InsufficientPairs:
      return kExitNumerical;
    default:
      return kExitValidation;
  }
}

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(std::string(to_string(kind)) + ": " + message), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }
  int exit_code() const noexcept { return exit_code_for(kind_); }

 private:
  ErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& message) {
  throw Error(kind, message);
}

}  // namespace polyprobe
