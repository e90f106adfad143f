#pragma once

#include <stdexcept>
#include <string>

namespace alseq {

/// Failure categories, mapped to process exit codes by the CLI.
enum class ErrorKind {
    config  = 1,  // bad flags, bad config values, unusable experiment spec
    data    = 2,  // malformed corpus, tag scheme violations, misaligned inputs
    runtime = 3,  // internal invariant broken, I/O failure mid-run
};

class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& msg)
        : std::runtime_error(msg), kind_(kind) {}
    ErrorKind kind() const { return kind_; }

private:
    ErrorKind kind_;
};

struct ConfigError : Error {
    explicit ConfigError(const std::string& msg) : Error(ErrorKind::config, msg) {}
};

struct DataError : Error {
    explicit DataError(const std::string& msg) : Error(ErrorKind::data, msg) {}
};

struct RuntimeError : Error {
    explicit RuntimeError(const std::string& msg) : Error(ErrorKind::runtime, msg) {}
};

}  // namespace alseq
