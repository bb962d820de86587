#pragma once

#include <stdexcept>
#include <string>

namespace ltx {

// Error taxonomy shared by the library and the CLI exit codes.
enum class ErrorKind : int {
    input = 2,     // malformed arguments, empty inputs, out-of-range ids
    data = 3,      // bad records, alignment mismatches, schema violations
    capacity = 4,  // sequence-length / cache overflow
    numeric = 5,   // non-finite values where finite math is required
    config = 6,    // inconsistent configuration (missing specials, bad shapes)
};

class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& msg) : std::runtime_error(msg), kind_(kind) {}
    ErrorKind kind() const noexcept { return kind_; }
    int exit_code() const noexcept { return static_cast<int>(kind_); }

private:
    ErrorKind kind_;
};

struct InputError : Error {
    explicit InputError(const std::string& msg) : Error(ErrorKind::input, msg) {}
};
struct DataError : Error {
    explicit DataError(const std::string& msg) : Error(ErrorKind::data, msg) {}
};
struct CapacityError : Error {
    explicit CapacityError(const std::string& msg) : Error(ErrorKind::capacity, msg) {}
};
struct NumericError : Error {
    explicit NumericError(const std::string& msg) : Error(ErrorKind::numeric, msg) {}
};
struct ConfigError : Error {
    explicit ConfigError(const std::string& msg) : Error(ErrorKind::config, msg) {}
};

}  // namespace ltx
