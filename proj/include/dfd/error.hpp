#pragma once

#include <stdexcept>
#include <string>

namespace dfd {

/// Base of every error thrown by the library. `kind()` names the failure
/// class so that callers (and the CLI) can report it without RTTI games.
class Error : public std::runtime_error {
 public:
  Error(std::string kind, const std::string& what)
      : std::runtime_error(kind + ": " + what), kind_(std::move(kind)) {}
  const std::string& kind() const noexcept { return kind_; }

 private:
  std::string kind_;
};

#define DFD_DEFINE_ERROR(Name)                                   \
  class Name : public Error {                                    \
   public:                                                       \
    explicit Name(const std::string& what) : Error(#Name, what) {} \
  }

// signal-core
DFD_DEFINE_ERROR(SpecError);
DFD_DEFINE_ERROR(MissingData);
DFD_DEFINE_ERROR(FormatError);
DFD_DEFINE_ERROR(InvalidFraction);
DFD_DEFINE_ERROR(ClassStarved);
// spectral
DFD_DEFINE_ERROR(InvalidWindow);
DFD_DEFINE_ERROR(LengthError);
DFD_DEFINE_ERROR(SignalTooShort);
// features / shallow / shared
DFD_DEFINE_ERROR(EmptyInput);
DFD_DEFINE_ERROR(NonFinite);
DFD_DEFINE_ERROR(ShapeError);
DFD_DEFINE_ERROR(EmptyCombination);
DFD_DEFINE_ERROR(UnknownFeature);
DFD_DEFINE_ERROR(DegenerateLabels);
// transfer
DFD_DEFINE_ERROR(InvalidK);
DFD_DEFINE_ERROR(EmptyPool);
DFD_DEFINE_ERROR(SchemaError);
// deepnet
DFD_DEFINE_ERROR(ArchError);
DFD_DEFINE_ERROR(EmptyDataset);
// cli
DFD_DEFINE_ERROR(ConfigError);

#undef DFD_DEFINE_ERROR

}  // namespace dfd
