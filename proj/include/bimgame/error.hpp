#pragma once

#include <stdexcept>
#include <string>

namespace bimgame {

enum class ErrorKind {
  Config,
  Domain,
  IntegrationFault,
  Shape,
  NumericFault,
  Dataset,
  StaleArtifact,
  Precondition,
  Io,
};

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}
  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

#define BIMGAME_ERROR_TYPE(Name, Kind)                                   \
  struct Name : Error {                                                  \
    explicit Name(const std::string& what) : Error(ErrorKind::Kind, what) {} \
  }

BIMGAME_ERROR_TYPE(ConfigError, Config);
BIMGAME_ERROR_TYPE(DomainError, Domain);
BIMGAME_ERROR_TYPE(IntegrationFault, IntegrationFault);
BIMGAME_ERROR_TYPE(ShapeError, Shape);
BIMGAME_ERROR_TYPE(NumericFault, NumericFault);
BIMGAME_ERROR_TYPE(DatasetError, Dataset);
BIMGAME_ERROR_TYPE(StaleArtifactError, StaleArtifact);
BIMGAME_ERROR_TYPE(PreconditionError, Precondition);
BIMGAME_ERROR_TYPE(IoError, Io);

#undef BIMGAME_ERROR_TYPE

}  // namespace bimgame
