#pragma once

#include <stdexcept>
#include <string>

namespace scm {

// Root of every error the library throws. The CLI maps these to exit code 1.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Malformed input text (CSV headers, cells, dates, config lines).
class ParseError : public Error {
public:
    using Error::Error;
};

// Well-formed input that breaks a data-model invariant (duplicate labels, ragged rows).
class ValidationError : public Error {
public:
    using Error::Error;
};

// Period window outside the available range.
class RangeError : public Error {
public:
    using Error::Error;
};

// Invalid numeric parameter (negative alpha, empty vector, ...).
class ParameterError : public Error {
public:
    using Error::Error;
};

// A study design that cannot be built from the panel.
class StudyError : public Error {
public:
    using Error::Error;
};

// Placebo inference with no usable comparison set.
class InferenceError : public Error {
public:
    using Error::Error;
};

} // namespace scm
