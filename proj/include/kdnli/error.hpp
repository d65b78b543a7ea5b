#ifndef KDNLI_ERROR_HPP_
#define KDNLI_ERROR_HPP_

#include <stdexcept>
#include <string>

namespace kdnli {

/// Base of every error raised by the library. Subclasses name the failure
/// category so callers can branch on type without string matching.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

#define KDNLI_DEFINE_ERROR(Name)            \
    class Name : public Error {             \
    public:                                 \
        using Error::Error;                 \
    }

KDNLI_DEFINE_ERROR(ShapeError);
KDNLI_DEFINE_ERROR(NumericalInputError);
KDNLI_DEFINE_ERROR(LabelError);
KDNLI_DEFINE_ERROR(OptimizerStateError);
KDNLI_DEFINE_ERROR(EmptyInputError);
KDNLI_DEFINE_ERROR(TokenizationError);
KDNLI_DEFINE_ERROR(DataError);
KDNLI_DEFINE_ERROR(ParseError);
KDNLI_DEFINE_ERROR(ArgumentError);
KDNLI_DEFINE_ERROR(CoverageError);
KDNLI_DEFINE_ERROR(FormatError);
KDNLI_DEFINE_ERROR(IntegrityError);
KDNLI_DEFINE_ERROR(StaleCacheError);
KDNLI_DEFINE_ERROR(ConfigError);

#undef KDNLI_DEFINE_ERROR

/// Raised when a translator fails on one element of a batch.
class TranslationError : public Error {
public:
    TranslationError(std::size_t index, const std::string& what)
        : Error("translation failed at example " + std::to_string(index) + ": " + what),
          index_(index) {}

    std::size_t index() const noexcept { return index_; }

private:
    std::size_t index_;
};

}  // namespace kdnli

#endif  // KDNLI_ERROR_HPP_
