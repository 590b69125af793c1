#pragma once

#include <stdexcept>
#include <string>

namespace behave {

enum class ErrorCode {
    InvalidArgument,
    MissingColumn,
    EmptyTable,
    MalformedRow,
    DuplicateRunItem,
    UnbalancedTag,
    InvalidSegment,
    UnknownVocabulary,
    InvalidParams,
    ModeMismatch,
    UnsupportedModality,
    SystemAfterStart,
    Provider,
    Transport,
    MalformedResponse,
    LogprobsAbsent,
    Io,
    UnsupportedExtension,
    SchemaMismatch,
    Bind,
    Scenario,
    NoGenderTokens,
    MissingCondition,
};

const char* to_string(ErrorCode code) noexcept;

// Library failure tagged with an ErrorCode.
class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& message)
        : std::runtime_error(message), code_(code) {}

    ErrorCode code() const noexcept { return code_; }

private:
    ErrorCode code_;
};

}  // namespace behave
