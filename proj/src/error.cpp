#include "polytx/error.hpp"

namespace polytx {

std::string_view error_code_name(ErrorCode code) {
  switch (code) {
    case ErrorCode::EmptyInput: return "EmptyInput";
    case ErrorCode::EmptyCorpus: return "EmptyCorpus";
    case ErrorCode::BadMaxLen: return "BadMaxLen";
    case ErrorCode::ParseError: return "ParseError";
    case ErrorCode::ShapeMismatch: return "ShapeMismatch";
    case ErrorCode::AllIgnored: return "AllIgnored";
    case ErrorCode::AllUnobserved: return "AllUnobserved";
    case ErrorCode::NotScalar: return "NotScalar";
    case ErrorCode::NotOnGraph: return "NotOnGraph";
    case ErrorCode::NonFiniteGradient: return "NonFiniteGradient";
    case ErrorCode::BadStep: return "BadStep";
    case ErrorCode::BadConfig: return "BadConfig";
    case ErrorCode::TooFewSamples: return "TooFewSamples";
    case ErrorCode::DegenerateRange: return "DegenerateRange";
    case ErrorCode::ConstantTruth: return "ConstantTruth";
    case ErrorCode::EmptyTestSet: return "EmptyTestSet";
    case ErrorCode::DegenerateData: return "DegenerateData";
    case ErrorCode::MissingResults: return "MissingResults";
    case ErrorCode::BadFormat: return "BadFormat";
    case ErrorCode::IoError: return "IoError";
  }
  return "Unknown";
}

}  // namespace polytx
