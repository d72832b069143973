#pragma once

#include <stdexcept>
#include <string>

namespace sae {

// Base class for everything thrown by this library.
struct Error : std::runtime_error {
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// ---- data / input validation -------------------------------------------
struct ValidationError : Error { using Error::Error; };
struct MissingColumn : ValidationError { using ValidationError::ValidationError; };
struct NonIntegerCount : ValidationError { using ValidationError::ValidationError; };
struct NonPositivePopulation : ValidationError { using ValidationError::ValidationError; };
struct DuplicateAreaId : ValidationError { using ValidationError::ValidationError; };
struct UnknownClass : ValidationError { using ValidationError::ValidationError; };
struct InconsistentClassCount : ValidationError { using ValidationError::ValidationError; };
struct EmptyArea : ValidationError { using ValidationError::ValidationError; };
struct NonIntegerClassCovariate : ValidationError { using ValidationError::ValidationError; };
struct DimensionMismatch : ValidationError { using ValidationError::ValidationError; };
struct OddLength : ValidationError { using ValidationError::ValidationError; };
struct InvalidScenario : ValidationError { using ValidationError::ValidationError; };

// ---- numerics ------------------------------------------------------------
struct DomainError : Error { using Error::Error; };
struct SingularMatrix : Error { using Error::Error; };
struct NonFiniteResult : Error { using Error::Error; };

// ---- model fitting -------------------------------------------------------
struct NonConvergence : Error { using Error::Error; };
struct ModeSearchFailure : Error { using Error::Error; };
struct DegenerateWeights : Error { using Error::Error; };

// ---- bootstrap -----------------------------------------------------------
struct ReplicateFitFailure : Error { using Error::Error; };
struct BootstrapFailureRate : Error { using Error::Error; };
struct ZeroSigma : Error { using Error::Error; };
struct MissingSecondStage : Error { using Error::Error; };

}  // namespace sae
