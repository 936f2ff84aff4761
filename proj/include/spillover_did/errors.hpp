#pragma once

#include <stdexcept>
#include <string>

namespace spillover_did {

// Error codes mirror the failure modes of the public operations. The CLI
// maps them onto exit statuses and machine-parsable one-line messages.
enum class errc {
  missing_column,
  duplicate_key,
  non_absorbing_treatment,
  empty_result,
  unknown_unit,
  negative_radius,
  invalid_coordinates,
  missing_coordinates,
  non_convergence,
  rank_deficient,
  empty_group,
  no_unexposed_controls,
  no_unexposed_treated,
  empty_subsample,
  too_many_failures,
  degenerate_geometry,
  zero_denominator,
  invalid_argument,
  io_error,
};

inline const char* errc_name(errc c) {
  switch (c) {
    case errc::missing_column: return "MissingColumn";
    case errc::duplicate_key: return "DuplicateKey";
    case errc::non_absorbing_treatment: return "NonAbsorbingTreatment";
    case errc::empty_result: return "EmptyResult";
    case errc::unknown_unit: return "UnknownUnit";
    case errc::negative_radius: return "NegativeRadius";
    case errc::invalid_coordinates: return "InvalidCoordinates";
    case errc::missing_coordinates: return "MissingCoordinates";
    case errc::non_convergence: return "NonConvergence";
    case errc::rank_deficient: return "RankDeficient";
    case errc::empty_group: return "EmptyGroup";
    case errc::no_unexposed_controls: return "NoUnexposedControls";
    case errc::no_unexposed_treated: return "NoUnexposedTreated";
    case errc::empty_subsample: return "EmptySubsample";
    case errc::too_many_failures: return "TooManyFailures";
    case errc::degenerate_geometry: return "DegenerateGeometry";
    case errc::zero_denominator: return "ZeroDenominator";
    case errc::invalid_argument: return "InvalidArgument";
    case errc::io_error: return "IoError";
  }
  return "Unknown";
}

class Error : public std::runtime_error {
 public:
  Error(errc code, const std::string& message)
      : std::runtime_error(message), code_(code) {}

  errc code() const { return code_; }
  const char* code_name() const { return errc_name(code_); }

 private:
  errc code_;
};

[[noreturn]] inline void fail(errc code, const std::string& message) {
  throw Error(code, message);
}

}  // namespace spillover_did
