#pragma once

#include <stdexcept>
#include <string>

namespace meanfield {

/// Solution left the trust region (Linf guard tripped); maps to CLI exit 3.
struct BlowupError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Requested state exceeds the amplitude budget; maps to CLI exit 4.
struct BudgetError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Malformed or contradictory experiment configuration; maps to CLI exit 2.
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace meanfield
