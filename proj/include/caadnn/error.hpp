#pragma once

#include <stdexcept>
#include <string>

namespace caadnn {

class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Operand outside the mathematical domain of an operation (log of a
// negative range, division by exactly zero, ...).
class DomainError : public Error {
public:
    using Error::Error;
};

class ShapeError : public Error {
public:
    using Error::Error;
};

// Malformed model / tensor document. `pointer()` is a JSON pointer to the
// offending node when one is known.
class SchemaError : public Error {
public:
    SchemaError(const std::string& pointer, const std::string& what)
        : Error(pointer.empty() ? what : pointer + ": " + what), pointer_(pointer) {}

    const std::string& pointer() const noexcept { return pointer_; }

private:
    std::string pointer_;
};

class IoError : public Error {
public:
    using Error::Error;
};

}  // namespace caadnn
