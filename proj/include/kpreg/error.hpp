#pragma once

#include <stdexcept>
#include <string>

namespace kpreg {

/// Broad classes used by the command-line front end to pick an exit status.
enum class ErrorClass {
    usage = 1,   // bad configuration or arguments
    input = 2,   // unreadable, malformed or out-of-range input data
    numeric = 3, // numerical failure during fitting or checking
};

class Error : public std::runtime_error {
public:
    Error(ErrorClass cls, const std::string &what) : std::runtime_error(what), cls_(cls) {}
    ErrorClass error_class() const noexcept { return cls_; }

private:
    ErrorClass cls_;
};

#define KPREG_DEFINE_ERROR(Name, Class)                                              \
    class Name : public Error {                                                      \
    public:                                                                          \
        explicit Name(const std::string &what) : Error(ErrorClass::Class, what) {}   \
    }

KPREG_DEFINE_ERROR(EmptySetError, input);
KPREG_DEFINE_ERROR(EmptyCorrespondenceError, input);
KPREG_DEFINE_ERROR(EmptyBatchError, input);
KPREG_DEFINE_ERROR(ParseError, input);
KPREG_DEFINE_ERROR(ValidationError, input);
KPREG_DEFINE_ERROR(IoError, input);
KPREG_DEFINE_ERROR(ConfigInvalidError, usage);
KPREG_DEFINE_ERROR(LengthMismatchError, usage);
KPREG_DEFINE_ERROR(NestingTooDeepError, usage);
KPREG_DEFINE_ERROR(SingularSystemError, numeric);
KPREG_DEFINE_ERROR(NonInvertibleError, numeric);
KPREG_DEFINE_ERROR(DivergenceError, numeric);

#undef KPREG_DEFINE_ERROR

} // namespace kpreg
