#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace driveby {

enum class ErrorKind {
  // spectral
  RecordTooShort,
  InvalidOverlap,
  NonHermitianInput,
  NoPeakInBand,
  // preprocess
  BandOutsideGrid,
  GridMismatch,
  SetSizeTooLarge,
  DegenerateRange,
  HeterogeneousSamples,
  // aae
  DimensionMismatch,
  EmptyBatch,
  TooFewSamples,
  // matrix profile
  LengthMismatch,
  InvalidLength,
  SequenceTooShort,
  // simulation
  UnstableTimestep,
  VehicleFasterThanBeam,
  // pipeline
  ConfigInvalid,
  IoFailure,
  BundleCorrupt,
  SchemaMismatch,
  InvalidArgument,
};

std::string_view to_string(ErrorKind kind);

// Every failure raised by the toolkit carries one of the kinds above so that
// callers (and the CLI exit-code mapping) can dispatch without parsing text.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(std::string(to_string(kind)) + ": " + what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

// CLI contract: 0 success, 2 config error, 3 data error, 4 numerical failure.
int exit_code(ErrorKind kind);

}  // namespace driveby
