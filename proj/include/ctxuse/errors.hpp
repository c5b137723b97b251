#pragma once

#include <stdexcept>
#include <string>

namespace ctxuse {

// Every failure surfaced by the library carries a stable machine-readable
// code; the CLI prints it verbatim in its error summary.
class Error : public std::runtime_error {
public:
    Error(std::string code, const std::string& message)
        : std::runtime_error(message), code_(std::move(code)) {}

    const std::string& code() const noexcept { return code_; }

private:
    std::string code_;
};

#define CTXUSE_DEFINE_ERROR(Name)                                            \
    class Name : public Error {                                              \
    public:                                                                  \
        explicit Name(const std::string& message) : Error(#Name, message) {} \
    };

CTXUSE_DEFINE_ERROR(DanglingReference)
CTXUSE_DEFINE_ERROR(MalformedTriplet)
CTXUSE_DEFINE_ERROR(DegenerateClaim)
CTXUSE_DEFINE_ERROR(DegenerateText)
CTXUSE_DEFINE_ERROR(DegenerateInput)
CTXUSE_DEFINE_ERROR(UnparseableJudgement)
CTXUSE_DEFINE_ERROR(MalformedUrl)
CTXUSE_DEFINE_ERROR(MissingSlotValue)
CTXUSE_DEFINE_ERROR(ReplayMiss)
CTXUSE_DEFINE_ERROR(ZeroMass)
CTXUSE_DEFINE_ERROR(StoreCorruption)
CTXUSE_DEFINE_ERROR(NoPairableValues)
CTXUSE_DEFINE_ERROR(LengthMismatch)
CTXUSE_DEFINE_ERROR(EmptyInput)
CTXUSE_DEFINE_ERROR(ConfigError)

#undef CTXUSE_DEFINE_ERROR

class InvariantViolation : public Error {
public:
    InvariantViolation(std::string field, const std::string& message)
        : Error("InvariantViolation", field + ": " + message), field_(std::move(field)) {}

    const std::string& field() const noexcept { return field_; }

private:
    std::string field_;
};

class ParseError : public Error {
public:
    ParseError(std::size_t line, const std::string& message)
        : Error("ParseError", "line " + std::to_string(line) + ": " + message), line_(line) {}

    std::size_t line() const noexcept { return line_; }

private:
    std::size_t line_;
};

// Remote backends. `retryable` distinguishes transport/5xx failures from
// requests the server rejected outright.
class BackendError : public Error {
public:
    BackendError(std::string code, const std::string& message, bool retryable)
        : Error(std::move(code), message), retryable_(retryable) {}

    bool retryable() const noexcept { return retryable_; }

private:
    bool retryable_;
};

class SearchBackendError : public BackendError {
public:
    SearchBackendError(const std::string& message, bool retryable = true)
        : BackendError("SearchBackendError", message, retryable) {}
};

class RerankBackendError : public BackendError {
public:
    RerankBackendError(const std::string& message, bool retryable = true)
        : BackendError("RerankBackendError", message, retryable) {}
};

class ProviderError : public BackendError {
public:
    ProviderError(const std::string& message, bool retryable = true)
        : BackendError("ProviderError", message, retryable) {}
};

}  // namespace ctxuse
