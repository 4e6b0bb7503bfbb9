#pragma once

#include <stdexcept>
#include <string>

namespace ssbd {

// Base error. `kind()` is a stable machine-readable tag used by the CLI
// error records; the what() string carries human-readable context.
class Error : public std::runtime_error {
 public:
  Error(std::string kind, const std::string& message)
      : std::runtime_error(message), kind_(std::move(kind)) {}
  const std::string& kind() const noexcept { return kind_; }

 private:
  std::string kind_;
};

#define SSBD_DEFINE_ERROR(Name)                                        \
  class Name : public Error {                                          \
   public:                                                             \
    explicit Name(const std::string& message) : Error(#Name, message) {} \
  }

SSBD_DEFINE_ERROR(MalformedXml);
SSBD_DEFINE_ERROR(SchemaViolation);
SSBD_DEFINE_ERROR(IntervalOutOfRange);
SSBD_DEFINE_ERROR(MissingVideoFile);
SSBD_DEFINE_ERROR(UndecodableVideo);
SSBD_DEFINE_ERROR(EmptyVideo);
SSBD_DEFINE_ERROR(EstimatorFailure);
SSBD_DEFINE_ERROR(DegenerateCrop);
SSBD_DEFINE_ERROR(ShapeMismatch);
SSBD_DEFINE_ERROR(DivergedImmediately);
SSBD_DEFINE_ERROR(EmptySplit);
SSBD_DEFINE_ERROR(NonFiniteLoss);
SSBD_DEFINE_ERROR(ComponentNotLoaded);
SSBD_DEFINE_ERROR(LengthMismatch);
SSBD_DEFINE_ERROR(EmptyInput);
SSBD_DEFINE_ERROR(BackboneUnavailable);
SSBD_DEFINE_ERROR(IoError);

#undef SSBD_DEFINE_ERROR

}  // namespace ssbd
