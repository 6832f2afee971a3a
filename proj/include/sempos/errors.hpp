#pragma once

#include <stdexcept>
#include <string>

namespace sempos {

// Root of every error raised by the library. Each subclass names one failure
// condition so callers can catch precisely what they can handle.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

#define SEMPOS_DEFINE_ERROR(Name)    \
  class Name : public Error {        \
   public:                           \
    using Error::Error;              \
  }

SEMPOS_DEFINE_ERROR(DimensionMismatch);
SEMPOS_DEFINE_ERROR(EmptyInput);
SEMPOS_DEFINE_ERROR(NonFiniteValue);
SEMPOS_DEFINE_ERROR(NonScalarRoot);
SEMPOS_DEFINE_ERROR(NonDeterministicFunction);
SEMPOS_DEFINE_ERROR(OutOfVocabulary);
SEMPOS_DEFINE_ERROR(ZeroVector);
SEMPOS_DEFINE_ERROR(LengthMismatch);
SEMPOS_DEFINE_ERROR(UnknownBlockName);
SEMPOS_DEFINE_ERROR(InvalidConfig);
SEMPOS_DEFINE_ERROR(EmptyGrammar);
SEMPOS_DEFINE_ERROR(MalformedAnnotation);
SEMPOS_DEFINE_ERROR(EmptyString);
SEMPOS_DEFINE_ERROR(CorruptFile);
SEMPOS_DEFINE_ERROR(VersionMismatch);
SEMPOS_DEFINE_ERROR(EmptyCorpus);
SEMPOS_DEFINE_ERROR(EmptyCaption);
SEMPOS_DEFINE_ERROR(TrainingDiverged);
SEMPOS_DEFINE_ERROR(UsageError);

#undef SEMPOS_DEFINE_ERROR

}  // namespace sempos
