#pragma once

#include <stdexcept>
#include <string>

namespace hydrogel {

/// Base class of every error raised by the library.
class Error : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// A constitutive function was evaluated outside its admissible domain
/// (J <= 0, s <= 0, corrupted history).
class DomainError : public Error {
public:
  using Error::Error;
};

/// Invalid user configuration (parameters, geometry, config file).
class ConfigError : public Error {
public:
  using Error::Error;
};

/// Mesh generation, pairing or import failure.
class MeshError : public Error {
public:
  using Error::Error;
};

/// Nonlinear or linear solver failure that survived all recovery attempts.
class SolverError : public Error {
public:
  using Error::Error;
};

/// A trial state left the admissible set; the caller should shrink the step.
class StepRejected : public Error {
public:
  using Error::Error;
};

/// Process exit codes of the command line tool.
enum ExitCode : int {
  kExitOk = 0,
  kExitFailure = 1,
  kExitConfig = 2,
  kExitSolver = 3,
  kExitMesh = 4,
};

}  // namespace hydrogel
