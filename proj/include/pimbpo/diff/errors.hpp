#pragma once

#include <stdexcept>

namespace pimbpo::ad {

/// Raised when an operation is called outside of its documented contract.
class ContractViolation : public std::logic_error {
public:
  using std::logic_error::logic_error;
};

} // namespace pimbpo::ad
