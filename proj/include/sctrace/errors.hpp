#pragma once

#include <stdexcept>
#include <string>

namespace sctrace {

/// Invalid user-supplied parameter (bad bounds, counts, ranges).
class ParameterError : public std::invalid_argument {
public:
  explicit ParameterError(const std::string& what) : std::invalid_argument(what) {}
};

/// A numerical accuracy target could not be met (quadrature non-convergence,
/// truncated domain losing mass, grid too coarse for the requested scale).
class AccuracyError : public std::runtime_error {
public:
  explicit AccuracyError(const std::string& what) : std::runtime_error(what) {}
};

/// A stated contract was violated by the input (non-symmetric operator,
/// partition defect, support touching the boundary).
class ContractError : public std::runtime_error {
public:
  explicit ContractError(const std::string& what) : std::runtime_error(what) {}
};

/// Root finding / shooting failures (no sign change in bracket, step underflow).
class SolverError : public std::runtime_error {
public:
  explicit SolverError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace sctrace
