#pragma once

#include <stdexcept>
#include <string>

namespace mathrec {

// Base for every error raised by the library. kind() is a short stable
// identifier used by the CLI for machine-parsable error lines.
class Error : public std::runtime_error {
 public:
  Error(std::string kind, const std::string& what)
      : std::runtime_error(what), kind_(std::move(kind)) {}

  const std::string& kind() const noexcept { return kind_; }

 private:
  std::string kind_;
};

#define MATHREC_DEFINE_ERROR(Name, tag)                                      \
  class Name : public Error {                                                \
   public:                                                                   \
    explicit Name(const std::string& what) : Error(tag, what) {}             \
  };

MATHREC_DEFINE_ERROR(InputError, "input")
MATHREC_DEFINE_ERROR(ShapeError, "shape")
MATHREC_DEFINE_ERROR(ParseError, "parse")
MATHREC_DEFINE_ERROR(NumericError, "numeric")
MATHREC_DEFINE_ERROR(DegenerateGeometryError, "degenerate-geometry")
MATHREC_DEFINE_ERROR(EmptyExpressionError, "empty-expression")
MATHREC_DEFINE_ERROR(ContractError, "contract")
MATHREC_DEFINE_ERROR(StateError, "state")
MATHREC_DEFINE_ERROR(PairingError, "pairing")
MATHREC_DEFINE_ERROR(RenderError, "render")
MATHREC_DEFINE_ERROR(UndefinedMetricError, "undefined-metric")
MATHREC_DEFINE_ERROR(IoError, "io")
MATHREC_DEFINE_ERROR(CompatibilityError, "compatibility")

#undef MATHREC_DEFINE_ERROR

}  // namespace mathrec
