#pragma once

#include <stdexcept>
#include <string>

namespace ndl {

// All library failures derive from Error so callers can catch one type
// at the process boundary and still discriminate below it.
struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct FormatError : Error { using Error::Error; };       // bad magic, unparseable file
struct VersionError : Error { using Error::Error; };      // recognized format, wrong version
struct CorruptionError : Error { using Error::Error; };   // truncated or inconsistent payload
struct ValidationError : Error { using Error::Error; };   // data violates an invariant
struct ParameterError : Error { using Error::Error; };    // caller passed an out-of-range argument
struct DimensionError : Error { using Error::Error; };    // shape mismatch
struct MontageError : Error { using Error::Error; };      // unresolvable channel reference
struct IoError : Error { using Error::Error; };           // filesystem failure
struct UndefinedMetricError : Error { using Error::Error; };
struct DivergenceError : Error { using Error::Error; };   // non-finite loss during training

}  // namespace ndl
