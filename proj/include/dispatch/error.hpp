#pragma once

#include <stdexcept>
#include <string>

namespace dispatch {

enum class Errc {
  Parse,
  NonRadial,
  PhaseMismatch,
  DuplicateId,
  MissingSlack,
  NonPositiveBase,
  RaggedSeries,
  NegativeSolar,
  UnknownNode,
  OutOfRangeFraction,
  HorizonMismatch,
  UnsupportedObjective,
  UnknownObjective,
  SizeMismatch,
  NotConverged,
  PowerFlowDiverged,
  InfeasibleAtFixedP,
  SecondStageInfeasible,
  BudgetExceeded,
  OrderingViolated,
  SolveFailed,
  IoError,
  InvalidArgument,
};

const char* to_string(Errc code);

class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

  Errc code() const noexcept { return code_; }

 private:
  Errc code_;
};

}  // namespace dispatch
