#include "instavo/optim.h"

namespace instavo {

std::string_view ToString(LMTermination reason) {
  switch (reason) {
    case LMTermination::kCostTolerance: return "CostTol";
    case LMTermination::kStepTolerance: return "StepTol";
    case LMTermination::kMaxIterations: return "MaxIter";
    case LMTermination::kNumericalFailure: return "NumericalFailure";
  }
  return "Unknown";
}

void LMConfig::Validate() const {
  if (max_iterations < 1) throw std::invalid_argument("LMConfig: max_iterations must be >= 1");
  if (!(initial_damping > 0.0)) throw std::invalid_argument("LMConfig: initial_damping must be > 0");
  if (!(damping_up > 1.0) || !(damping_down > 1.0)) {
    throw std::invalid_argument("LMConfig: damping factors must be > 1");
  }
  if (!(cost_tolerance > 0.0) || !(step_tolerance > 0.0)) {
    throw std::invalid_argument("LMConfig: tolerances must be > 0");
  }
}

}  // namespace instavo
