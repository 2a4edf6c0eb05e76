#pragma once

#include <stdexcept>
#include <string>

namespace cyclebnn {

// All module errors carry a short stable token (e.g. "incompatible-shapes")
// as the exception message so callers and tests can match on the exact kind.
class Error : public std::runtime_error {
public:
    explicit Error(const std::string& token) : std::runtime_error(token) {}
};

} // namespace cyclebnn

#define CBNN_CHECK(cond, token) \
    do {                                         \
        if (!(cond)) throw ::cyclebnn::Error(token); \
    } while (0)
