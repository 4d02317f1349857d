#include "fjm/error.hpp"

namespace fjm {

std::string_view errc_name(Errc code) {
  switch (code) {
    case Errc::Usage: return "Usage";
    case Errc::Io: return "Io";
    case Errc::MissingCoefficientBundle: return "MissingCoefficientBundle";
    case Errc::MissingColumn: return "MissingColumn";
    case Errc::NonNumericValue: return "NonNumericValue";
    case Errc::TimeOutOfDomain: return "TimeOutOfDomain";
    case Errc::EmptyDataset: return "EmptyDataset";
    case Errc::SubjectMismatch: return "SubjectMismatch";
    case Errc::ObservationAfterEvent: return "ObservationAfterEvent";
    case Errc::InsufficientData: return "InsufficientData";
    case Errc::InsufficientPairs: return "InsufficientPairs";
    case Errc::NoUsablePairs: return "NoUsablePairs";
    case Errc::DimensionMismatch: return "DimensionMismatch";
    case Errc::EventTimeNotInJumps: return "EventTimeNotInJumps";
    case Errc::EmptyRiskSet: return "EmptyRiskSet";
    case Errc::SingularGram: return "SingularGram";
    case Errc::DegenerateScaling: return "DegenerateScaling";
    case Errc::SingularMarginal: return "SingularMarginal";
    case Errc::SingularInformation: return "SingularInformation";
    case Errc::DegenerateWeights: return "DegenerateWeights";
    case Errc::SingularDesign: return "SingularDesign";
    case Errc::InnerLoopDivergence: return "InnerLoopDivergence";
    case Errc::ZeroDenominator: return "ZeroDenominator";
    case Errc::AllCellsFailed: return "AllCellsFailed";
    case Errc::Unachievable: return "Unachievable";
  }
  return "Unknown";
}

}  // namespace fjm
