// Copyright 2026 The llmsched Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace llmsched {

// Tile not present in the GPU's tile sets.
class InvalidTileError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class FitError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Malformed or out-of-order input row. row() is 1-based over data rows.
class ParseError : public std::runtime_error {
 public:
  ParseError(std::int64_t row, const std::string& what)
      : std::runtime_error("row " + std::to_string(row) + ": " + what), row_(row) {}
  std::int64_t row() const { return row_; }

 private:
  std::int64_t row_;
};

class ValidationError : public ParseError {
 public:
  using ParseError::ParseError;
};

class DivisibilityError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class RoutingError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

class MemoryOverflowError : public std::runtime_error {
 public:
  MemoryOverflowError(int node, std::int64_t batch_seq, std::int64_t needed,
                      std::int64_t capacity)
      : std::runtime_error("kv overflow on node " + std::to_string(node) + " batch " +
                           std::to_string(batch_seq) + ": need " + std::to_string(needed) +
                           " tokens, capacity " + std::to_string(capacity)),
        node_(node),
        batch_seq_(batch_seq) {}
  int node() const { return node_; }
  std::int64_t batch_seq() const { return batch_seq_; }

 private:
  int node_;
  std::int64_t batch_seq_;
};

}  // namespace llmsched
