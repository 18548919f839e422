#pragma once

#include <stdexcept>
#include <string>

namespace hilight {

using LabelId = int;

enum class ErrorCode {
  MultipleParents,
  DisconnectedNode,
  CycleDetected,
  EmptyTaxonomy,
  OrphanLabel,
  NotAPositive,
  PositiveInHardSet,
  EmptyPositives,
  EmptyDocument,
  TokenOutOfVocab,
  DimensionMismatch,
  ShapeMismatch,
  NonFiniteGradient,
  EmptyDataset,
  UnknownLabelName,
  MalformedLine,
  InfeasibleSpec,
  InvalidConfig,
  IoError,
};

inline const char* to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::MultipleParents: return "MultipleParents";
    case ErrorCode::DisconnectedNode: return "DisconnectedNode";
    case ErrorCode::CycleDetected: return "CycleDetected";
    case ErrorCode::EmptyTaxonomy: return "EmptyTaxonomy";
    case ErrorCode::OrphanLabel: return "OrphanLabel";
    case ErrorCode::NotAPositive: return "NotAPositive";
    case ErrorCode::PositiveInHardSet: return "PositiveInHardSet";
    case ErrorCode::EmptyPositives: return "EmptyPositives";
    case ErrorCode::EmptyDocument: return "EmptyDocument";
    case ErrorCode::TokenOutOfVocab: return "TokenOutOfVocab";
    case ErrorCode::DimensionMismatch: return "DimensionMismatch";
    case ErrorCode::ShapeMismatch: return "ShapeMismatch";
    case ErrorCode::NonFiniteGradient: return "NonFiniteGradient";
    case ErrorCode::EmptyDataset: return "EmptyDataset";
    case ErrorCode::UnknownLabelName: return "UnknownLabelName";
    case ErrorCode::MalformedLine: return "MalformedLine";
    case ErrorCode::InfeasibleSpec: return "InfeasibleSpec";
    case ErrorCode::InvalidConfig: return "InvalidConfig";
    case ErrorCode::IoError: return "IoError";
  }
  return "UnknownError";
}

/// Library error with a machine-checkable code; message carries the details
/// (offending label name, line number, ...).
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(std::string(to_string(code)) + ": " + message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& message) {
  throw Error(code, message);
}

}  // namespace hilight
