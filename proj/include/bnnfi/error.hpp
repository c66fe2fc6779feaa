#pragma once

#include <stdexcept>
#include <string>

namespace bnnfi {

/// A caller broke a documented precondition (length mismatch, index out of range).
class ContractError : public std::logic_error {
 public:
  explicit ContractError(const std::string& what) : std::logic_error(what) {}
};

/// Invalid topology, folding, campaign or CLI configuration.
class ConfigError : public std::runtime_error {
 public:
  explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

/// Malformed input file (IDX, model file, records, checkpoint).
class ParseError : public std::runtime_error {
 public:
  explicit ParseError(const std::string& what) : std::runtime_error(what) {}
};

/// Aggregation inputs are inconsistent with each other.
class DataError : public std::runtime_error {
 public:
  explicit DataError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace bnnfi
