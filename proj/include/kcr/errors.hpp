#pragma once

#include <stdexcept>
#include <string>

namespace kcr {

// Error taxonomy shared by the library and the CLI exit-code contract:
// validation-type errors exit 1, numeric errors exit 2, I/O errors exit 3.
enum class error_kind {
    dimension,
    argument,
    config,
    numeric,
    degenerate,
    io,
};

class error : public std::runtime_error {
public:
    error(error_kind kind, const std::string& what)
        : std::runtime_error(what), kind_(kind) {}

    error_kind kind() const { return kind_; }

    int exit_code() const {
        switch (kind_) {
            case error_kind::numeric:    return 2;
            case error_kind::degenerate: return 2;
            case error_kind::io:         return 3;
            default:                     return 1;
        }
    }

private:
    error_kind kind_;
};

[[noreturn]] inline void throw_dimension(const std::string& what) { throw error(error_kind::dimension, what); }
[[noreturn]] inline void throw_argument(const std::string& what)  { throw error(error_kind::argument, what); }
[[noreturn]] inline void throw_config(const std::string& what)    { throw error(error_kind::config, what); }
[[noreturn]] inline void throw_numeric(const std::string& what)    { throw error(error_kind::numeric, what); }
[[noreturn]] inline void throw_degenerate(const std::string& what) { throw error(error_kind::degenerate, what); }
[[noreturn]] inline void throw_io(const std::string& what)         { throw error(error_kind::io, what); }

} // namespace kcr
