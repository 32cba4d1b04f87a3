#pragma once

#include <stdexcept>
#include <string>

namespace depthfill {

// Base of every toolkit error. `kind()` is the stable machine-readable
// identifier the CLI emits in its error records.
class Error : public std::runtime_error {
public:
    Error(const char* kind, const std::string& msg)
        : std::runtime_error(msg), kind_(kind) {}
    const char* kind() const noexcept { return kind_; }

private:
    const char* kind_;
};

#define DEPTHFILL_ERROR_TYPE(Name)                         \
    struct Name : Error {                                  \
        explicit Name(const std::string& msg)              \
            : Error(#Name, msg) {}                         \
    }

DEPTHFILL_ERROR_TYPE(ShapeError);
DEPTHFILL_ERROR_TYPE(IoError);
DEPTHFILL_ERROR_TYPE(LabelError);
DEPTHFILL_ERROR_TYPE(ConfigError);
DEPTHFILL_ERROR_TYPE(EmptyDatasetError);
DEPTHFILL_ERROR_TYPE(EmptyEvalError);
DEPTHFILL_ERROR_TYPE(ScheduleError);
DEPTHFILL_ERROR_TYPE(NumericalError);
DEPTHFILL_ERROR_TYPE(IndexError);
DEPTHFILL_ERROR_TYPE(InitError);
DEPTHFILL_ERROR_TYPE(CheckpointError);
DEPTHFILL_ERROR_TYPE(ConsistencyError);
DEPTHFILL_ERROR_TYPE(DivergedError);
DEPTHFILL_ERROR_TYPE(LockError);

#undef DEPTHFILL_ERROR_TYPE

}  // namespace depthfill
