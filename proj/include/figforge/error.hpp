#pragma once

#include <stdexcept>
#include <string>

namespace figforge {

// Exit codes used by the CLI for each error family.
enum class ErrorFamily { Generic, Validation, Backend, Schema };

class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& what) : std::runtime_error(what) {}
  virtual ErrorFamily family() const noexcept { return ErrorFamily::Generic; }
};

#define FIGFORGE_DECLARE_ERROR(Name, Base, Family)                         \
  class Name : public Base {                                               \
   public:                                                                 \
    explicit Name(const std::string& what) : Base(what) {}                 \
    ErrorFamily family() const noexcept override { return Family; }        \
  };

// Input and configuration problems.
FIGFORGE_DECLARE_ERROR(ValidationError, Error, ErrorFamily::Validation)
FIGFORGE_DECLARE_ERROR(FileNotFound, ValidationError, ErrorFamily::Validation)
FIGFORGE_DECLARE_ERROR(DecodeError, ValidationError, ErrorFamily::Validation)
FIGFORGE_DECLARE_ERROR(EmptyDocument, ValidationError, ErrorFamily::Validation)
FIGFORGE_DECLARE_ERROR(PreconditionError, ValidationError, ErrorFamily::Validation)
FIGFORGE_DECLARE_ERROR(InvalidLayout, PreconditionError, ErrorFamily::Validation)

// Backend failures.
FIGFORGE_DECLARE_ERROR(BackendError, Error, ErrorFamily::Backend)
FIGFORGE_DECLARE_ERROR(NoBackend, BackendError, ErrorFamily::Backend)
FIGFORGE_DECLARE_ERROR(Exhausted, BackendError, ErrorFamily::Backend)
FIGFORGE_DECLARE_ERROR(BackendRejected, BackendError, ErrorFamily::Backend)

// Thrown by backend implementations; the gateway turns these into
// Exhausted or BackendRejected.
FIGFORGE_DECLARE_ERROR(TransientFailure, Error, ErrorFamily::Backend)
FIGFORGE_DECLARE_ERROR(PermanentFailure, Error, ErrorFamily::Backend)

// Model replies that do not fit their expected shape.
FIGFORGE_DECLARE_ERROR(SchemaError, Error, ErrorFamily::Schema)
FIGFORGE_DECLARE_ERROR(ParseError, SchemaError, ErrorFamily::Schema)
FIGFORGE_DECLARE_ERROR(CoverageError, SchemaError, ErrorFamily::Schema)

// Markup.
FIGFORGE_DECLARE_ERROR(MalformedMarkup, ValidationError, ErrorFamily::Validation)
FIGFORGE_DECLARE_ERROR(UnsupportedElement, MalformedMarkup, ErrorFamily::Validation)

// Statistics and aggregation.
FIGFORGE_DECLARE_ERROR(EmptyInput, ValidationError, ErrorFamily::Validation)
FIGFORGE_DECLARE_ERROR(EmptyGroup, EmptyInput, ErrorFamily::Validation)
FIGFORGE_DECLARE_ERROR(Degenerate, ValidationError, ErrorFamily::Validation)
FIGFORGE_DECLARE_ERROR(LengthMismatch, ValidationError, ErrorFamily::Validation)
FIGFORGE_DECLARE_ERROR(ZeroVariance, ValidationError, ErrorFamily::Validation)

#undef FIGFORGE_DECLARE_ERROR

// 0 success, 2 validation, 3 backend exhaustion, 4 schema failure, 1 other.
inline int exit_code_for(const Error& e) {
  switch (e.family()) {
    case ErrorFamily::Validation: return 2;
    case ErrorFamily::Backend: return 3;
    case ErrorFamily::Schema: return 4;
    case ErrorFamily::Generic: break;
  }
  return 1;
}

}  // namespace figforge
