#pragma once

#include <stdexcept>
#include <string>

namespace gcf {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

#define GCF_DEFINE_ERROR(Name)          \
  class Name : public Error {           \
   public:                              \
    using Error::Error;                 \
  }

GCF_DEFINE_ERROR(InvalidArgument);
GCF_DEFINE_ERROR(ParseError);
GCF_DEFINE_ERROR(DegenerateMesh);
GCF_DEFINE_ERROR(BehindCamera);
GCF_DEFINE_ERROR(BufferMismatch);
GCF_DEFINE_ERROR(DimensionMismatch);
GCF_DEFINE_ERROR(PredictorFailure);
GCF_DEFINE_ERROR(EmptyRenderAtStart);
GCF_DEFINE_ERROR(NoValidVertices);
GCF_DEFINE_ERROR(NotARotation);
GCF_DEFINE_ERROR(ZeroGtTranslation);
GCF_DEFINE_ERROR(EmptyInput);
GCF_DEFINE_ERROR(ConfigError);

#undef GCF_DEFINE_ERROR

}  // namespace gcf
