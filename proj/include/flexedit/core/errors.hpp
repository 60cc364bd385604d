// Copyright 2026 The flexedit Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace flexedit {

/// Base class of every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// A configuration field failed validation.
class ValidationError : public Error {
public:
    ValidationError(std::string field, const std::string& constraint)
        : Error("invalid value for '" + field + "': " + constraint), field_(std::move(field)) {}

    const std::string& field() const noexcept { return field_; }

private:
    std::string field_;
};

/// A serialized tensor could not be decoded.
class FormatError : public Error {
public:
    FormatError(std::size_t offset, const std::string& what)
        : Error("tensor format error at byte " + std::to_string(offset) + ": " + what), offset_(offset) {}

    std::size_t offset() const noexcept { return offset_; }

private:
    std::size_t offset_;
};

/// A text document (manifest, index file) could not be parsed.
class ParseError : public Error {
public:
    ParseError(std::size_t line, const std::string& what)
        : Error("parse error on line " + std::to_string(line) + ": " + what), line_(line) {}

    std::size_t line() const noexcept { return line_; }

private:
    std::size_t line_;
};

class DimensionError : public Error {
public:
    using Error::Error;
};

class MappingError : public Error {
public:
    using Error::Error;
};

/// Non-finite value produced while integrating the flow. `layer` is -1 when
/// the failure was detected on the velocity output rather than inside a layer.
class NumericError : public Error {
public:
    NumericError(int step, int layer, const std::string& what)
        : Error("non-finite value at step " + std::to_string(step) +
                (layer >= 0 ? ", layer " + std::to_string(layer) : std::string(", velocity output")) + ": " +
                what),
          step_(step),
          layer_(layer) {}

    int step() const noexcept { return step_; }
    int layer() const noexcept { return layer_; }

private:
    int step_;
    int layer_;
};

class LookupError : public Error {
public:
    using Error::Error;
};

class CaptureError : public Error {
public:
    CaptureError(int layer, const std::string& what)
        : Error("capture error at layer " + std::to_string(layer) + ": " + what), layer_(layer) {}

    int layer() const noexcept { return layer_; }

private:
    int layer_;
};

class InjectionError : public Error {
public:
    InjectionError(int layer, const std::string& what)
        : Error("injection error at layer " + std::to_string(layer) + ": " + what), layer_(layer) {}

    int layer() const noexcept { return layer_; }

private:
    int layer_;
};

class MaskError : public Error {
public:
    using Error::Error;
};

class BlendError : public Error {
public:
    using Error::Error;
};

class SpecError : public Error {
public:
    using Error::Error;
};

class CodecError : public Error {
public:
    using Error::Error;
};

class MetricError : public Error {
public:
    using Error::Error;
};

} // namespace flexedit
