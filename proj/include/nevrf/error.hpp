// Copyright 2026 nevrf contributors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace nevrf {

enum class ErrorKind {
    BehindCamera,
    DegenerateView,
    OutOfBounds,
    OutOfView,
    ShapeError,
    TapeError,
    InsufficientViews,
    NoVisibility,
    InitDiverged,
    Diverged,
    SvdFailed,
    FormatError,
    InvalidArgument,
    Io,
};

std::string_view to_string(ErrorKind kind);

/// Exception carrying a machine-checkable error kind; `what()` has the human message.
class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& message)
        : std::runtime_error(std::string(to_string(kind)) + ": " + message), kind_(kind) {}

    ErrorKind kind() const noexcept { return kind_; }

private:
    ErrorKind kind_;
};

inline std::string_view to_string(ErrorKind kind) {
    switch (kind) {
    case ErrorKind::BehindCamera: return "behind-camera";
    case ErrorKind::DegenerateView: return "degenerate-view";
    case ErrorKind::OutOfBounds: return "out-of-bounds";
    case ErrorKind::OutOfView: return "out-of-view";
    case ErrorKind::ShapeError: return "shape-error";
    case ErrorKind::TapeError: return "tape-error";
    case ErrorKind::InsufficientViews: return "insufficient-views";
    case ErrorKind::NoVisibility: return "no-visibility";
    case ErrorKind::InitDiverged: return "init-diverged";
    case ErrorKind::Diverged: return "diverged";
    case ErrorKind::SvdFailed: return "svd-failed";
    case ErrorKind::FormatError: return "format-error";
    case ErrorKind::InvalidArgument: return "invalid-argument";
    case ErrorKind::Io: return "io-error";
    }
    return "unknown";
}

} // namespace nevrf
