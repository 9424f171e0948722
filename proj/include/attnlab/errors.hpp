#pragma once

#include <stdexcept>
#include <string>

namespace attnlab {

// Error taxonomy for the whole library. Every throwing precondition uses one
// of these types so callers and tests can match on the exact failure class.
struct Error : std::runtime_error {
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

struct InvalidInput : Error { using Error::Error; };
struct InvalidToken : Error { using Error::Error; };
struct SequenceTooLong : Error { using Error::Error; };
struct TrainingDiverged : Error { using Error::Error; };
struct SamplerStalled : Error { using Error::Error; };
struct SamplerViolation : Error { using Error::Error; };
struct UnsupportedModel : Error { using Error::Error; };
struct BlockTooLarge : Error { using Error::Error; };
struct EvaluationError : Error { using Error::Error; };

// Configuration problems carry the JSON path of the offending field.
struct ConfigError : Error {
    std::string path;
    ConfigError(const std::string& field_path, const std::string& msg)
        : Error("config error at " + field_path + ": " + msg), path(field_path) {}
};

}  // namespace attnlab
