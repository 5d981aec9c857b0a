// errors.hpp
// Exceptions shared by the training loops.
#pragma once

#include <stdexcept>

namespace cog {

class NonFiniteLoss : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

}  // namespace cog
