#pragma once

#include <stdexcept>
#include <string>
#include <utility>

namespace pcseg {

/// Domain error with a stable machine-readable code.
///
/// Codes in use: CenterOutside, NoIntersection, Degenerate,
/// SingularDenominator, ZeroUnion, EmptySet, ParseError, TooFewPoints,
/// InvalidSpec, NestingViolation, ShapeMismatch, StaleCache,
/// InvalidDescriptor, BadMagic, VersionMismatch, TruncatedFile,
/// NonFiniteLoss, IoError.
class Error : public std::runtime_error {
public:
    Error(std::string code, const std::string& message)
        : std::runtime_error(code + ": " + message), code_(std::move(code)) {}

    const std::string& code() const noexcept { return code_; }

private:
    std::string code_;
};

}  // namespace pcseg
