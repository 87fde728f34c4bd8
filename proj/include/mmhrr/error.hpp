/**
 * Exception types shared by every pipeline stage.
 *
 * Each error carries the name of the stage that raised it so the CLI can
 * report "which stage failed" without string matching.
 */
#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace mmhrr {

class Error : public std::runtime_error {
public:
    Error(std::string stage, const std::string& what)
        : std::runtime_error(stage + ": " + what), stage_(std::move(stage)) {}

    const std::string& stage() const noexcept { return stage_; }

private:
    std::string stage_;
};

/// A documented invariant or precondition was violated by the caller.
class InvalidArgument : public Error {
public:
    using Error::Error;
};

/// Malformed input file. `line` is 1-based, 0 when the position is unknown.
class ParseError : public Error {
public:
    ParseError(std::string stage, const std::string& what, std::size_t line)
        : Error(std::move(stage), line ? what + " (line " + std::to_string(line) + ")" : what),
          line_(line) {}

    std::size_t line() const noexcept { return line_; }

private:
    std::size_t line_;
};

/// The range-bin tracker lost the target for longer than the allowed gap.
class TrackingLost : public Error {
public:
    TrackingLost(const std::string& what, std::size_t frame)
        : Error("radar-sim", what), frame_(frame) {}

    std::size_t frame() const noexcept { return frame_; }

private:
    std::size_t frame_;
};

/// No mode inside the heart-rate band survived classification.
class NoHeartbeat : public Error {
public:
    explicit NoHeartbeat(const std::string& what) : Error("mode-select", what) {}
};

/// Too few peaks (or too short a span) to form a counting window.
class NoEstimate : public Error {
public:
    explicit NoEstimate(const std::string& what) : Error("hr-estimate", what) {}
};

/// Too many output points had to be carried forward.
class DegradedQuality : public Error {
public:
    DegradedQuality(const std::string& what, double carry_fraction)
        : Error("hr-estimate", what), carry_fraction_(carry_fraction) {}

    double carry_fraction() const noexcept { return carry_fraction_; }

private:
    double carry_fraction_;
};

}  // namespace mmhrr
