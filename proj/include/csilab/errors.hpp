#pragma once

#include <stdexcept>
#include <string>

namespace csilab {

// Cyclic-prefix budget or other structural constraint broken.
class constraint_violation : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Input is valid by type but carries no usable information (e.g. all-zero CSI).
class degenerate_input : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class training_failure : public std::runtime_error {
public:
    training_failure(const std::string& msg, std::size_t epoch)
        : std::runtime_error(msg), epoch(epoch) {}
    std::size_t epoch;
};

// Non-finite value encountered mid-optimization; message carries the iterate dump.
class numeric_failure : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// A required input file does not exist.
class missing_input : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// A config/dataset/checkpoint file exists but does not match its schema.
class schema_error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

} // namespace csilab
