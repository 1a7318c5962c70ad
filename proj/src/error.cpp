#include "driveby/error.hpp"

namespace driveby {

std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::RecordTooShort: return "RecordTooShort";
    case ErrorKind::InvalidOverlap: return "InvalidOverlap";
    case ErrorKind::NonHermitianInput: return "NonHermitianInput";
    case ErrorKind::NoPeakInBand: return "NoPeakInBand";
    case ErrorKind::BandOutsideGrid: return "BandOutsideGrid";
    case ErrorKind::GridMismatch: return "GridMismatch";
    case ErrorKind::SetSizeTooLarge: return "SetSizeTooLarge";
    case ErrorKind::DegenerateRange: return "DegenerateRange";
    case ErrorKind::HeterogeneousSamples: return "HeterogeneousSamples";
    case ErrorKind::DimensionMismatch: return "DimensionMismatch";
    case ErrorKind::EmptyBatch: return "EmptyBatch";
    case ErrorKind::TooFewSamples: return "TooFewSamples";
    case ErrorKind::LengthMismatch: return "LengthMismatch";
    case ErrorKind::InvalidLength: return "InvalidLength";
    case ErrorKind::SequenceTooShort: return "SequenceTooShort";
    case ErrorKind::UnstableTimestep: return "UnstableTimestep";
    case ErrorKind::VehicleFasterThanBeam: return "VehicleFasterThanBeam";
    case ErrorKind::ConfigInvalid: return "ConfigInvalid";
    case ErrorKind::IoFailure: return "IoFailure";
    case ErrorKind::BundleCorrupt: return "BundleCorrupt";
    case ErrorKind::SchemaMismatch: return "SchemaMismatch";
    case ErrorKind::InvalidArgument: return "InvalidArgument";
  }
  return "Unknown";
}

int exit_code(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::ConfigInvalid:
    case ErrorKind::InvalidArgument:
    case ErrorKind::VehicleFasterThanBeam:
      return 2;
    case ErrorKind::NonHermitianInput:
    case ErrorKind::NoPeakInBand:
    case ErrorKind::DegenerateRange:
    case ErrorKind::UnstableTimestep:
      return 4;
    default:
      return 3;
  }
}

}  // namespace driveby
