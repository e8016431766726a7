#pragma once

#include <stdexcept>
#include <string>

namespace chargenet {

/// Operand shapes do not fit the operation.
struct DimensionError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

/// A precondition of an operation was violated by the caller.
struct ContractError : std::logic_error {
  using std::logic_error::logic_error;
};

/// Malformed file or checkpoint contents.
struct FormatError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Input data could not be ingested (empty corpus, unreadable file, ...).
struct IngestionError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Invalid model or run configuration.
struct ConfigError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

/// Training produced a non-finite loss.
struct DivergenceError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace chargenet
