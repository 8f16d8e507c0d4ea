#pragma once

#include <stdexcept>
#include <string>

namespace fdrecon {

/// Base for every error raised by the library. `code()` is a stable,
/// module-qualified identifier ("core_model.dataset", "linalg.rank", ...)
/// that the CLI reports in its machine-readable error output.
class Error : public std::runtime_error {
 public:
  Error(std::string code, const std::string& message)
      : std::runtime_error(message), code_(std::move(code)) {}

  const std::string& code() const noexcept { return code_; }

 private:
  std::string code_;
};

#define FDRECON_DEFINE_ERROR(Name, Code)                                   \
  class Name : public Error {                                              \
   public:                                                                 \
    explicit Name(const std::string& message) : Error(Code, message) {}    \
  }

FDRECON_DEFINE_ERROR(DatasetError, "core_model.dataset");
FDRECON_DEFINE_ERROR(RankError, "linalg.rank");
FDRECON_DEFINE_ERROR(NumericalError, "linalg.numerical");
FDRECON_DEFINE_ERROR(SingularError, "linalg.singular");
FDRECON_DEFINE_ERROR(DomainError, "factor_recon.domain");
FDRECON_DEFINE_ERROR(FoldError, "selection.fold");
FDRECON_DEFINE_ERROR(ShapeError, "simulation.shape");
FDRECON_DEFINE_ERROR(ConfigError, "simulation.config");
FDRECON_DEFINE_ERROR(ParseError, "io_cli.parse");
FDRECON_DEFINE_ERROR(CovariateMissingError, "io_cli.covariate_missing");

#undef FDRECON_DEFINE_ERROR

/// Zero-variance input where a scale is required. Raised by both weight
/// selection and the band residual scale, so the module prefix is explicit.
class DegenerateError : public Error {
 public:
  explicit DegenerateError(const std::string& message,
                           const std::string& module = "selection")
      : Error(module + ".degenerate", message) {}
};

}  // namespace fdrecon
