#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace deco {

enum class ErrorCode {
    dimension_mismatch,
    constant_column,
    not_symmetric,
    not_positive_semidefinite,
    no_convergence,
    singular_without_ridge,
    invalid_spec,
    degenerate_signal,
    degenerate_response,
    max_iterations,
    empty_path,
    invalid_m,
    coverage_gap,
    non_finite,
    io,
    parse,
    invalid_config,
};

inline std::string_view to_string(ErrorCode code)
{
    switch (code) {
        case ErrorCode::dimension_mismatch: return "DimensionMismatch";
        case ErrorCode::constant_column: return "ConstantColumn";
        case ErrorCode::not_symmetric: return "NotSymmetric";
        case ErrorCode::not_positive_semidefinite: return "NotPositiveSemidefinite";
        case ErrorCode::no_convergence: return "NoConvergence";
        case ErrorCode::singular_without_ridge: return "SingularWithoutRidge";
        case ErrorCode::invalid_spec: return "InvalidSpec";
        case ErrorCode::degenerate_signal: return "DegenerateSignal";
        case ErrorCode::degenerate_response: return "DegenerateResponse";
        case ErrorCode::max_iterations: return "MaxIterations";
        case ErrorCode::empty_path: return "EmptyPath";
        case ErrorCode::invalid_m: return "InvalidM";
        case ErrorCode::coverage_gap: return "CoverageGap";
        case ErrorCode::non_finite: return "NonFinite";
        case ErrorCode::io: return "IOError";
        case ErrorCode::parse: return "ParseError";
        case ErrorCode::invalid_config: return "InvalidConfig";
    }
    return "Unknown";
}

/// Single exception type for the library. The code identifies the failure
/// kind; the message carries context (column index, stage, worker id, path).
class Error : public std::runtime_error
{
public:
    Error(ErrorCode code, const std::string& what)
        : std::runtime_error(std::string(to_string(code)) + ": " + what),
          code_(code)
    {}

    ErrorCode code() const noexcept { return code_; }

    /// Re-raise with a prefix such as "stage gram" or "worker 3".
    [[noreturn]] void rethrow_tagged(const std::string& tag) const
    {
        throw Error(code_, tag + ": " + message());
    }

    std::string message() const
    {
        std::string s = what();
        auto pos = s.find(": ");
        return pos == std::string::npos ? s : s.substr(pos + 2);
    }

private:
    ErrorCode code_;
};

} // namespace deco
