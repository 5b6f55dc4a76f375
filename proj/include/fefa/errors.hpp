#pragma once

#include <stdexcept>

namespace fefa {

// Configuration problems: bad keys, bad values, failed invariants.
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Missing or malformed input artifacts: files, checkpoints, WAVs.
struct InputError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace fefa
