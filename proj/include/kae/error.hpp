#pragma once

#include <stdexcept>
#include <string>

namespace kae {

// Failure classes map onto CLI exit codes: config/dimension/parameter -> 2,
// format/io -> 3, numeric -> 4.
enum class ErrorKind {
    config,
    dimension,
    parameter,
    format,
    io,
    numeric,
};

class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
    ErrorKind kind() const { return kind_; }

    static Error config(const std::string& msg) { return Error(ErrorKind::config, msg); }
    static Error dimension(const std::string& msg) { return Error(ErrorKind::dimension, msg); }
    static Error parameter(const std::string& msg) { return Error(ErrorKind::parameter, msg); }
    static Error format(const std::string& msg) { return Error(ErrorKind::format, msg); }
    static Error io(const std::string& msg) { return Error(ErrorKind::io, msg); }
    static Error numeric(const std::string& msg) { return Error(ErrorKind::numeric, msg); }

private:
    ErrorKind kind_;
};

inline int exit_code_for(ErrorKind kind) {
    switch (kind) {
    case ErrorKind::config:
    case ErrorKind::dimension:
    case ErrorKind::parameter:
        return 2;
    case ErrorKind::format:
    case ErrorKind::io:
        return 3;
    case ErrorKind::numeric:
        return 4;
    }
    return 1;
}

}  // namespace kae
