#include "szd/error.hpp"

namespace szd {

const char* to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::kMalformedHeader: return "MalformedHeader";
    case ErrorKind::kTruncatedRecords: return "TruncatedRecords";
    case ErrorKind::kZeroCalibrationRange: return "ZeroCalibrationRange";
    case ErrorKind::kNonUniformSampleRate: return "NonUniformSampleRate";
    case ErrorKind::kNegativeOnset: return "NegativeOnset";
    case ErrorKind::kOffsetBeforeOnset: return "OffsetBeforeOnset";
    case ErrorKind::kUnparseableLine: return "UnparseableLine";
    case ErrorKind::kAnnotationOutOfRange: return "AnnotationOutOfRange";
    case ErrorKind::kRecordingTooShort: return "RecordingTooShort";
    case ErrorKind::kWrongBlockLength: return "WrongBlockLength";
    case ErrorKind::kSampleRateTooLow: return "SampleRateTooLow";
    case ErrorKind::kNotUnitVector: return "NotUnitVector";
    case ErrorKind::kUnknownElectrode: return "UnknownElectrode";
    case ErrorKind::kDegenerateGeometry: return "DegenerateGeometry";
    case ErrorKind::kTooFewPoints: return "TooFewPoints";
    case ErrorKind::kShapeMismatch: return "ShapeMismatch";
    case ErrorKind::kWrongSequenceLength: return "WrongSequenceLength";
    case ErrorKind::kBadMagic: return "BadMagic";
    case ErrorKind::kTruncatedCheckpoint: return "TruncatedCheckpoint";
    case ErrorKind::kShapeMismatchOnLoad: return "ShapeMismatchOnLoad";
    case ErrorKind::kVersionUnsupported: return "VersionUnsupported";
    case ErrorKind::kNoPositives: return "NoPositives";
    case ErrorKind::kZeroPrior: return "ZeroPrior";
    case ErrorKind::kEmptySplit: return "EmptySplit";
    case ErrorKind::kEmptyPredictions: return "EmptyPredictions";
    case ErrorKind::kInfeasibleSchedule: return "InfeasibleSchedule";
    case ErrorKind::kDataLeak: return "DataLeak";
    case ErrorKind::kInvalidArgument: return "InvalidArgument";
    case ErrorKind::kIo: return "Io";
  }
  return "Unknown";
}

}  // namespace szd

namespace szd {

int exit_code(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::kInvalidArgument:
      return 2;
    case ErrorKind::kMalformedHeader:
    case ErrorKind::kTruncatedRecords:
    case ErrorKind::kZeroCalibrationRange:
    case ErrorKind::kNonUniformSampleRate:
    case ErrorKind::kNegativeOnset:
    case ErrorKind::kOffsetBeforeOnset:
    case ErrorKind::kUnparseableLine:
    case ErrorKind::kAnnotationOutOfRange:
    case ErrorKind::kBadMagic:
    case ErrorKind::kTruncatedCheckpoint:
    case ErrorKind::kShapeMismatchOnLoad:
    case ErrorKind::kVersionUnsupported:
      return 3;
    case ErrorKind::kDataLeak:
      return 5;
    case ErrorKind::kIo:
      return 6;
    default:
      return 4;
  }
}

}  // namespace szd
