#pragma once

#include <stdexcept>
#include <string>
#include <utility>

namespace maturity {

// Root of the library's error hierarchy. Everything thrown on a contract
// or runtime failure derives from this.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Invalid or inconsistent policy definition (bad document, duplicate pair,
// missing row, unknown category label, illegal lookup pair).
class PolicyError : public Error {
public:
    using Error::Error;
};

// Prompt rendering contract violation (e.g. intensity prompt for an
// intensity-insensitive category).
class PromptError : public Error {
public:
    using Error::Error;
};

// A model response that could not be decoded into the policy vocabulary.
// Carries the raw text so callers can log or retry.
class UnparseableError : public Error {
public:
    explicit UnparseableError(std::string raw_text)
        : Error("unparseable model response: \"" + raw_text + "\""),
          raw(std::move(raw_text)) {}

    std::string raw;
};

class IoError : public Error {
public:
    using Error::Error;
};

class FileNotFoundError : public IoError {
public:
    using IoError::IoError;
};

class UndecodableImageError : public Error {
public:
    using Error::Error;
};

// Dataset manifest problems.
class DatasetError : public Error {
public:
    using Error::Error;
};

class ManifestParseError : public DatasetError {
public:
    using DatasetError::DatasetError;
};

class DuplicateIdError : public DatasetError {
public:
    explicit DuplicateIdError(const std::string& id)
        : DatasetError("duplicate app id: " + id), app_id(id) {}

    std::string app_id;
};

class UnknownRatingError : public DatasetError {
public:
    explicit UnknownRatingError(const std::string& label)
        : DatasetError("unknown rating label: \"" + label + "\""), label(label) {}

    std::string label;
};

// Backend failures, split so the pipeline can react per kind.
class BackendError : public Error {
public:
    using Error::Error;
};

class AuthError : public BackendError {
public:
    using BackendError::BackendError;
};

class RateLimitedError : public BackendError {
public:
    using BackendError::BackendError;
};

class TransportError : public BackendError {
public:
    using BackendError::BackendError;
};

// The backend answered with a content-policy refusal instead of an answer.
class BackendRefusedError : public BackendError {
public:
    explicit BackendRefusedError(std::string text)
        : BackendError("backend refused request: \"" + text + "\""),
          response_text(std::move(text)) {}

    std::string response_text;
};

// A strategy was asked to run on an app lacking a required modality.
class MissingModalityError : public Error {
public:
    using Error::Error;
};

}  // namespace maturity
