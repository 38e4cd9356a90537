#pragma once

// Error taxonomy shared by the library and the CLI.
//
//   config_error : bad configuration or unusable flag/parameter combinations
//   data_error   : unreadable or malformed input data (files, CSV rows)
//   input_error  : structurally valid inputs that violate a precondition
//                  (probabilities not summing to one, infeasible moments, ...)
//
// The CLI maps config_error to exit code 1 and data/input errors to exit 2.

#include <stdexcept>
#include <string>

namespace harmbound {

struct config_error : std::runtime_error {
    explicit config_error(const std::string& msg) : std::runtime_error(msg) {}
};

struct data_error : std::runtime_error {
    explicit data_error(const std::string& msg) : std::runtime_error(msg) {}
};

struct input_error : std::runtime_error {
    explicit input_error(const std::string& msg) : std::runtime_error(msg) {}
};

struct internal_error : std::logic_error {
    explicit internal_error(const std::string& msg) : std::logic_error(msg) {}
};

} // namespace harmbound
