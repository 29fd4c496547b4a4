// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace structchem {

class Error : public std::runtime_error
{
public:
    using std::runtime_error::runtime_error;
};

class DatasetError : public Error
{
public:
    using Error::Error;
};

class ConfigError : public Error
{
public:
    using Error::Error;
};

class TemplateError : public Error
{
public:
    using Error::Error;
};

class PromptError : public Error
{
public:
    using Error::Error;
};

/// Raised by parse operations. `span` holds the offending text (possibly truncated).
class ParseError : public Error
{
public:
    ParseError(std::string const& message, std::string span = {})
        : Error(message)
        , span_(std::move(span))
    {
    }

    [[nodiscard]] std::string const& span() const noexcept { return span_; }

private:
    std::string span_;
};

class BackendError : public Error
{
public:
    using Error::Error;
};

class AuthenticationError : public BackendError
{
public:
    using BackendError::BackendError;
};

class ContextLengthError : public BackendError
{
public:
    ContextLengthError(std::string const& message, std::size_t prompt_chars)
        : BackendError(message + " (prompt size " + std::to_string(prompt_chars) + " chars)")
        , prompt_chars_(prompt_chars)
    {
    }

    [[nodiscard]] std::size_t prompt_chars() const noexcept { return prompt_chars_; }

private:
    std::size_t prompt_chars_;
};

/// A scripted oracle ran out of canned responses.
class OracleExhaustedError : public BackendError
{
public:
    using BackendError::BackendError;
};

class AnnotationError : public Error
{
public:
    using Error::Error;
};

class SandboxError : public Error
{
public:
    using Error::Error;
};

} // namespace structchem
