#pragma once

#include <stdexcept>
#include <string>

namespace clinloop {

// Invalid configuration or arguments (invalid-config, invalid-input,
// invalid-task, cron syntax errors).
struct ValidationError : std::runtime_error {
  explicit ValidationError(const std::string& msg) : std::runtime_error(msg) {}
};

// Filesystem failures; message carries the path.
struct IoError : std::runtime_error {
  explicit IoError(const std::string& msg) : std::runtime_error(msg) {}
};

// A referenced entity does not exist (unknown patient, order, unit, model).
struct NotFoundError : std::runtime_error {
  explicit NotFoundError(const std::string& msg) : std::runtime_error(msg) {}
};

// A data source could not be reached. Inference paths must fail closed on
// this: no score is ever fabricated.
struct SourceUnavailableError : std::runtime_error {
  explicit SourceUnavailableError(const std::string& msg)
      : std::runtime_error(msg) {}
};

// A persisted artifact failed a fingerprint or structural check; the message
// names the failed check.
struct IntegrityError : std::runtime_error {
  explicit IntegrityError(const std::string& msg) : std::runtime_error(msg) {}
};

// Duplicate registration.
struct ConflictError : std::runtime_error {
  explicit ConflictError(const std::string& msg) : std::runtime_error(msg) {}
};

// A feature vector was scored against the wrong vocabulary.
struct VocabularyMismatchError : std::runtime_error {
  explicit VocabularyMismatchError(const std::string& msg)
      : std::runtime_error(msg) {}
};

}  // namespace clinloop
