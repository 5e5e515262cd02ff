#pragma once

#include <stdexcept>
#include <string>

namespace amkalign {

/// Error category; the CLI maps these onto process exit codes.
enum class ErrorKind {
  InvalidArgument,
  Shape,
  DegenerateInput,
  InsufficientSamples,
  Pairing,
  Sampling,
  InvalidSetup,
  Config,
  Parse,
  Version,
  Contract,
};

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

#define AMKALIGN_DEFINE_ERROR(Name, Kind)                                  \
  class Name : public Error {                                              \
   public:                                                                 \
    explicit Name(const std::string& what) : Error(ErrorKind::Kind, what) {} \
  };

AMKALIGN_DEFINE_ERROR(InvalidArgument, InvalidArgument)
AMKALIGN_DEFINE_ERROR(ShapeError, Shape)
AMKALIGN_DEFINE_ERROR(DegenerateInput, DegenerateInput)
AMKALIGN_DEFINE_ERROR(InsufficientSamples, InsufficientSamples)
AMKALIGN_DEFINE_ERROR(PairingError, Pairing)
AMKALIGN_DEFINE_ERROR(SamplingError, Sampling)
AMKALIGN_DEFINE_ERROR(InvalidSetup, InvalidSetup)
AMKALIGN_DEFINE_ERROR(ConfigError, Config)
AMKALIGN_DEFINE_ERROR(ParseError, Parse)
AMKALIGN_DEFINE_ERROR(VersionError, Version)
AMKALIGN_DEFINE_ERROR(ContractViolation, Contract)

#undef AMKALIGN_DEFINE_ERROR

}  // namespace amkalign
