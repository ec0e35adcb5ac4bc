#pragma once

#include <stdexcept>
#include <string>

namespace pat {

struct IoError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Whole-file binary read/write; both throw IoError with the path on failure.
std::string read_file(const std::string& path);
void write_file(const std::string& path, const std::string& bytes);

}  // namespace pat
