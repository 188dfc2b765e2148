#pragma once

#include <stdexcept>
#include <string>

namespace meda {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

#define MEDA_DEFINE_ERROR(Name)                   \
  class Name : public Error {                     \
   public:                                        \
    explicit Name(const std::string& what)        \
        : Error(std::string(#Name ": ") + what) {} \
  }

MEDA_DEFINE_ERROR(ShapeError);
MEDA_DEFINE_ERROR(InputError);
MEDA_DEFINE_ERROR(EmptyPopulation);
MEDA_DEFINE_ERROR(EmptyClass);
MEDA_DEFINE_ERROR(EmptySurvivors);
MEDA_DEFINE_ERROR(CacheError);
MEDA_DEFINE_ERROR(GradError);
MEDA_DEFINE_ERROR(PersistError);
MEDA_DEFINE_ERROR(DataError);
MEDA_DEFINE_ERROR(FormatError);
MEDA_DEFINE_ERROR(ConfigError);
MEDA_DEFINE_ERROR(UndefinedAUC);

#undef MEDA_DEFINE_ERROR

}  // namespace meda
