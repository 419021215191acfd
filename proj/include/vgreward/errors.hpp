// Copyright (C) 2026 vgreward contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <stdexcept>
#include <string>

namespace vgreward {

/// Input data violates a documented invariant (bad box, bad record, bad request field).
/// `path()` names the offending field, e.g. "x2" or "groups[1].rollouts".
class ValidationError : public std::runtime_error {
public:
    ValidationError(std::string path, const std::string& what)
        : std::runtime_error(path.empty() ? what : path + ": " + what), path_(std::move(path)) {}

    const std::string& path() const noexcept { return path_; }

private:
    std::string path_;
};

/// A configuration value is out of its allowed range (alpha, tau, ...).
class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// A size limit was exceeded (canvas side, batch cap).
class CapacityError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// The judge replied with something that is not a well-formed verdict.
class ProtocolError : public std::runtime_error {
public:
    ProtocolError(const std::string& what, std::string raw)
        : std::runtime_error(what), raw_(std::move(raw)) {}

    const std::string& raw() const noexcept { return raw_; }

private:
    std::string raw_;
};

/// The judge endpoint could not be reached or returned a non-success status.
class TransportError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

}  // namespace vgreward
