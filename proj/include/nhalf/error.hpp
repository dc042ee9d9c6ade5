#pragma once

#include <stdexcept>
#include <string>

namespace nhalf {

// Every failure raised by the library derives from Error. kind() is the
// stable machine-readable tag the CLI prints on stderr.
class Error : public std::runtime_error {
 public:
  Error(std::string kind, const std::string& what)
      : std::runtime_error(what), kind_(std::move(kind)) {}
  const std::string& kind() const noexcept { return kind_; }

 private:
  std::string kind_;
};

#define NHALF_DEFINE_ERROR(Name, tag)                                  \
  class Name : public Error {                                          \
   public:                                                             \
    explicit Name(const std::string& what) : Error(tag, what) {}       \
  };

NHALF_DEFINE_ERROR(DomainError, "domain")
NHALF_DEFINE_ERROR(ShapeError, "shape")
NHALF_DEFINE_ERROR(ConfigError, "config")
NHALF_DEFINE_ERROR(CompileError, "compile")
NHALF_DEFINE_ERROR(FormatError, "format")
NHALF_DEFINE_ERROR(VersionError, "version")
NHALF_DEFINE_ERROR(TruncatedError, "truncated")
NHALF_DEFINE_ERROR(ChecksumError, "checksum")
NHALF_DEFINE_ERROR(InputError, "input")

#undef NHALF_DEFINE_ERROR

}  // namespace nhalf
