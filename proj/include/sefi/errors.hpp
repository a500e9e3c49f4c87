#ifndef SEFI_ERRORS_HPP
#define SEFI_ERRORS_HPP

#include <stdexcept>
#include <string>

namespace sefi {

// usage / configuration problems -> CLI exit code 2
struct config_error : std::runtime_error {
    explicit config_error(const std::string& msg) : std::runtime_error(msg) {}
};

// bad runtime inputs (shapes, ranges, data) -> CLI exit code 1
struct input_error : std::runtime_error {
    explicit input_error(const std::string& msg) : std::runtime_error(msg) {}
};

// filesystem / decode failures -> CLI exit code 1
struct io_error : std::runtime_error {
    explicit io_error(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace sefi

#endif
