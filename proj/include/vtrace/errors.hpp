#pragma once

#include <stdexcept>
#include <string>

namespace vtrace {

// Base for every error the library raises. `kind()` is a stable short name
// used by the CLI when reporting failures.
class Error : public std::runtime_error {
public:
    Error(std::string kind, const std::string& what)
        : std::runtime_error(what), kind_(std::move(kind)) {}

    const std::string& kind() const noexcept { return kind_; }

private:
    std::string kind_;
};

#define VTRACE_DEFINE_ERROR(Name)                                              \
    class Name : public Error {                                                \
    public:                                                                    \
        explicit Name(const std::string& what) : Error(#Name, what) {}         \
    };

// trace
VTRACE_DEFINE_ERROR(MalformedTag)
VTRACE_DEFINE_ERROR(InvalidTimeSpan)

// rewards / grpo
VTRACE_DEFINE_ERROR(InvalidGroundTruth)
VTRACE_DEFINE_ERROR(GroupTooSmall)
VTRACE_DEFINE_ERROR(EmptySequence)
VTRACE_DEFINE_ERROR(LengthMismatch)
VTRACE_DEFINE_ERROR(InvalidLogProbs)
VTRACE_DEFINE_ERROR(InvalidConfig)

// metrics
VTRACE_DEFINE_ERROR(EmptyCorpus)
VTRACE_DEFINE_ERROR(InvalidThreshold)
VTRACE_DEFINE_ERROR(EmptyCandidate)

// pipeline / io
VTRACE_DEFINE_ERROR(ClientTransport)
VTRACE_DEFINE_ERROR(MalformedGeneration)
VTRACE_DEFINE_ERROR(QuotaExceedsPool)
VTRACE_DEFINE_ERROR(IoFailure)
VTRACE_DEFINE_ERROR(SchemaViolation)

#undef VTRACE_DEFINE_ERROR

}  // namespace vtrace
