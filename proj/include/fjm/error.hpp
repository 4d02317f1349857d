#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace fjm {

/// Every failure the library can raise. The CLI maps these onto exit codes
/// through error_class().
enum class Errc {
  // usage / configuration
  Usage,
  Io,
  MissingCoefficientBundle,
  // data
  MissingColumn,
  NonNumericValue,
  TimeOutOfDomain,
  EmptyDataset,
  SubjectMismatch,
  ObservationAfterEvent,
  InsufficientData,
  InsufficientPairs,
  NoUsablePairs,
  DimensionMismatch,
  EventTimeNotInJumps,
  EmptyRiskSet,
  // numerical
  SingularGram,
  DegenerateScaling,
  SingularMarginal,
  SingularInformation,
  DegenerateWeights,
  SingularDesign,
  InnerLoopDivergence,
  ZeroDenominator,
  AllCellsFailed,
  Unachievable,
};

enum class ErrorClass { Usage = 1, Data = 2, Numerical = 3 };

constexpr ErrorClass error_class(Errc code) {
  switch (code) {
    case Errc::Usage:
    case Errc::Io:
    case Errc::MissingCoefficientBundle:
      return ErrorClass::Usage;
    case Errc::MissingColumn:
    case Errc::NonNumericValue:
    case Errc::TimeOutOfDomain:
    case Errc::EmptyDataset:
    case Errc::SubjectMismatch:
    case Errc::ObservationAfterEvent:
    case Errc::InsufficientData:
    case Errc::InsufficientPairs:
    case Errc::NoUsablePairs:
    case Errc::DimensionMismatch:
    case Errc::EventTimeNotInJumps:
    case Errc::EmptyRiskSet:
      return ErrorClass::Data;
    default:
      return ErrorClass::Numerical;
  }
}

std::string_view errc_name(Errc code);

class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& what)
      : std::runtime_error(std::string(errc_name(code)) + ": " + what), code_(code) {}

  Errc code() const noexcept { return code_; }
  ErrorClass category() const noexcept { return error_class(code_); }
  int exit_code() const noexcept { return static_cast<int>(category()); }

 private:
  Errc code_;
};

}  // namespace fjm
