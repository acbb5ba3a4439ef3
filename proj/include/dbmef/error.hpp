#pragma once

#include <stdexcept>
#include <string>

namespace dbmef {

// Every failure raised by the library derives from Error so callers (the CLI
// in particular) can separate library diagnostics from programming faults.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

#define DBMEF_DEFINE_ERROR(Name)          \
    class Name : public Error {           \
    public:                               \
        using Error::Error;               \
    }

DBMEF_DEFINE_ERROR(ParameterError);
DBMEF_DEFINE_ERROR(ShapeError);
DBMEF_DEFINE_ERROR(IndexError);
DBMEF_DEFINE_ERROR(ConditionError);
DBMEF_DEFINE_ERROR(NumericError);
DBMEF_DEFINE_ERROR(ContractError);
DBMEF_DEFINE_ERROR(CalibrationError);
DBMEF_DEFINE_ERROR(DataError);
DBMEF_DEFINE_ERROR(FormatError);
DBMEF_DEFINE_ERROR(UnsupportedVersionError);
DBMEF_DEFINE_ERROR(IoError);
DBMEF_DEFINE_ERROR(ParseError);
DBMEF_DEFINE_ERROR(ValidationError);

#undef DBMEF_DEFINE_ERROR

}  // namespace dbmef
