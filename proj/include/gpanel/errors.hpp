#pragma once

#include <stdexcept>
#include <string>

namespace gpanel {

// Base classes: ValidationError for bad inputs/preconditions, NumericError for
// failures detected during computation. The CLI maps them to exit codes 2 and 3.
struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct ValidationError : Error {
    using Error::Error;
};

struct NumericError : Error {
    using Error::Error;
};

// panel_core
struct MissingCellError : ValidationError { using ValidationError::ValidationError; };
struct NonFiniteValueError : ValidationError { using ValidationError::ValidationError; };
struct DuplicateConflictError : ValidationError { using ValidationError::ValidationError; };
struct SchemaMismatchError : ValidationError { using ValidationError::ValidationError; };
struct DimensionMismatchError : ValidationError { using ValidationError::ValidationError; };

// eigsolve
struct NonSymmetricError : NumericError { using NumericError::NumericError; };
struct DegenerateSketchError : NumericError { using NumericError::NumericError; };

// spectral
struct SingularSigmaError : NumericError { using NumericError::NumericError; };

// classify
struct DegenerateSplitError : NumericError { using NumericError::NumericError; };
struct TSmallerThanGError : ValidationError { using ValidationError::ValidationError; };

// postspectral
struct EmptyGroupError : ValidationError { using ValidationError::ValidationError; };
struct SingularGramError : NumericError { using NumericError::NumericError; };

// dynamic
struct TooFewPeriodsError : ValidationError { using ValidationError::ValidationError; };

// penalized
struct NotConditionedError : NumericError { using NumericError::NumericError; };

} // namespace gpanel
