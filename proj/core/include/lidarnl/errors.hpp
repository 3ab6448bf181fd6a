#ifndef LIDARNL_ERRORS_HPP_
#define LIDARNL_ERRORS_HPP_

#include <stdexcept>
#include <string>

namespace lidarnl {

// Root of every error thrown by the library. Callers that only care about
// "something in lidarnl failed" catch this.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

#define LIDARNL_DEFINE_ERROR(Name)      \
  class Name : public Error {           \
   public:                              \
    using Error::Error;                 \
  }

LIDARNL_DEFINE_ERROR(LengthError);     // byte buffer has the wrong size
LIDARNL_DEFINE_ERROR(ValueError);      // non-finite or out-of-range value
LIDARNL_DEFINE_ERROR(UnknownClass);    // raw id outside a taxonomy domain
LIDARNL_DEFINE_ERROR(ConfigError);     // invalid configuration
LIDARNL_DEFINE_ERROR(DegenerateError); // geometry that cannot be projected
LIDARNL_DEFINE_ERROR(ShapeError);      // tensor/array shape mismatch
LIDARNL_DEFINE_ERROR(NotScalar);       // backward() on a non-scalar
LIDARNL_DEFINE_ERROR(EmptyScene);
LIDARNL_DEFINE_ERROR(NonFinite);
LIDARNL_DEFINE_ERROR(NoClasses);
LIDARNL_DEFINE_ERROR(ZeroDivision);
LIDARNL_DEFINE_ERROR(IoError);

#undef LIDARNL_DEFINE_ERROR

}  // namespace lidarnl

#endif  // LIDARNL_ERRORS_HPP_
