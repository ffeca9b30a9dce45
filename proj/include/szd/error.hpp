#pragma once

#include <stdexcept>
#include <string>

namespace szd {

// Every failure raised by the library carries one of these kinds so callers
// (tests, the CLI exit-code table) can branch without parsing messages.
enum class ErrorKind {
  kMalformedHeader,
  kTruncatedRecords,
  kZeroCalibrationRange,
  kNonUniformSampleRate,
  kNegativeOnset,
  kOffsetBeforeOnset,
  kUnparseableLine,
  kAnnotationOutOfRange,
  kRecordingTooShort,
  kWrongBlockLength,
  kSampleRateTooLow,
  kNotUnitVector,
  kUnknownElectrode,
  kDegenerateGeometry,
  kTooFewPoints,
  kShapeMismatch,
  kWrongSequenceLength,
  kBadMagic,
  kTruncatedCheckpoint,
  kShapeMismatchOnLoad,
  kVersionUnsupported,
  kNoPositives,
  kZeroPrior,
  kEmptySplit,
  kEmptyPredictions,
  kInfeasibleSchedule,
  kDataLeak,
  kInvalidArgument,
  kIo,
};

const char* to_string(ErrorKind kind);

// Process exit code for the command-line tool; table in docs/exit_codes.md.
int exit_code(ErrorKind kind);

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(message), kind_(kind) {}

  ErrorKind kind() const { return kind_; }

 private:
  ErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& message) {
  throw Error(kind, message);
}

}  // namespace szd
