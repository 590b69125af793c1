#include "behave/error.hpp"

namespace behave {

const char* to_string(ErrorCode code) noexcept {
    switch (code) {
        case ErrorCode::InvalidArgument: return "InvalidArgument";
        case ErrorCode::MissingColumn: return "MissingColumn";
        case ErrorCode::EmptyTable: return "EmptyTable";
        case ErrorCode::MalformedRow: return "MalformedRow";
        case ErrorCode::DuplicateRunItem: return "DuplicateRunItem";
        case ErrorCode::UnbalancedTag: return "UnbalancedTag";
        case ErrorCode::InvalidSegment: return "InvalidSegment";
        case ErrorCode::UnknownVocabulary: return "UnknownVocabulary";
        case ErrorCode::InvalidParams: return "InvalidParams";
        case ErrorCode::ModeMismatch: return "ModeMismatch";
        case ErrorCode::UnsupportedModality: return "UnsupportedModality";
        case ErrorCode::SystemAfterStart: return "SystemAfterStart";
        case ErrorCode::Provider: return "ProviderError";
        case ErrorCode::Transport: return "TransportError";
        case ErrorCode::MalformedResponse: return "MalformedResponse";
        case ErrorCode::LogprobsAbsent: return "LogprobsAbsent";
        case ErrorCode::Io: return "IOError";
        case ErrorCode::UnsupportedExtension: return "UnsupportedExtension";
        case ErrorCode::SchemaMismatch: return "SchemaMismatch";
        case ErrorCode::Bind: return "BindError";
        case ErrorCode::Scenario: return "ScenarioError";
        case ErrorCode::NoGenderTokens: return "NoGenderTokens";
        case ErrorCode::MissingCondition: return "MissingCondition";
    }
    return "Unknown";
}

}  // namespace behave
