#pragma once

#include <stdexcept>
#include <string>

namespace svct {

enum class ErrorKind {
    invalid_size,
    out_of_domain,
    truncation,
    invalid_stride,
    shape_mismatch,
    diverged,
    degenerate_cloud,
    size_limit,
    uninitialized_stats,
    sample_size,
    missing_artifact,
    config,
    io,
};

const char* to_string(ErrorKind kind) noexcept;

// Single exception type for the library; callers branch on kind().
class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& what)
        : std::runtime_error(what), kind_(kind) {}

    ErrorKind kind() const noexcept { return kind_; }

    // Numerical failures map to CLI exit code 3, everything else to 2.
    bool numerical() const noexcept {
        return kind_ == ErrorKind::diverged || kind_ == ErrorKind::degenerate_cloud;
    }

private:
    ErrorKind kind_;
};

// Thrown by iterative solvers and the trainer; carries the step that blew up.
class DivergedError : public Error {
public:
    DivergedError(std::size_t index, const std::string& what)
        : Error(ErrorKind::diverged, what + " (at index " + std::to_string(index) + ")"),
          index_(index) {}

    std::size_t index() const noexcept { return index_; }

private:
    std::size_t index_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& what) {
    throw Error(kind, what);
}

inline void require(bool cond, ErrorKind kind, const std::string& what) {
    if (!cond) fail(kind, what);
}

}  // namespace svct
