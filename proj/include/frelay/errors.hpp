// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <stdexcept>
#include <string>

namespace frelay {

enum class ErrorKind { kConfig, kSolver, kIo };

class Error : public std::runtime_error {
 public:
  Error(std::string name, ErrorKind kind, const std::string& what)
      : std::runtime_error(name + ": " + what), name_(std::move(name)), kind_(kind) {}

  const std::string& name() const { return name_; }
  ErrorKind kind() const { return kind_; }

 private:
  std::string name_;
  ErrorKind kind_;
};

#define FRELAY_ERROR(Name, Kind)                                              \
  class Name : public Error {                                                 \
   public:                                                                    \
    explicit Name(const std::string& what) : Error(#Name, Kind, what) {}     \
  };

FRELAY_ERROR(UnstableProcess, ErrorKind::kSolver)
FRELAY_ERROR(NotPSDSpectrum, ErrorKind::kSolver)
FRELAY_ERROR(UnstableEffectiveNoise, ErrorKind::kSolver)
FRELAY_ERROR(CyclicGraph, ErrorKind::kConfig)
FRELAY_ERROR(DisconnectedSource, ErrorKind::kConfig)
FRELAY_ERROR(DimensionMismatch, ErrorKind::kSolver)
FRELAY_ERROR(NoConvergence, ErrorKind::kSolver)
FRELAY_ERROR(UnitCircleEigenvalue, ErrorKind::kSolver)
FRELAY_ERROR(InfeasibleTaps, ErrorKind::kSolver)
FRELAY_ERROR(NoRootInUnitInterval, ErrorKind::kSolver)
FRELAY_ERROR(InfeasibleGains, ErrorKind::kSolver)
FRELAY_ERROR(Infeasible, ErrorKind::kSolver)
FRELAY_ERROR(SolverStall, ErrorKind::kSolver)
FRELAY_ERROR(IterationDiverged, ErrorKind::kSolver)
FRELAY_ERROR(PowerViolation, ErrorKind::kSolver)
FRELAY_ERROR(ConfigParse, ErrorKind::kConfig)
FRELAY_ERROR(IoError, ErrorKind::kIo)

#undef FRELAY_ERROR

}  // namespace frelay
