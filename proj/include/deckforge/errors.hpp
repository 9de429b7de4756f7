//===- errors.hpp - Error classes shared across the toolkit -----*- C++ -*-===//
#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace deckforge {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed input document (JSON syntax, wrong types, unknown keys, bad
/// trace lines).
class ParseError : public Error {
 public:
  using Error::Error;
};

/// Well-formed document that breaks a model invariant. The message names the
/// offending entity.
class ValidationError : public Error {
 public:
  using Error::Error;
};

class EmptyInputSet : public Error {
 public:
  explicit EmptyInputSet(std::size_t index)
      : Error("deck set #" + std::to_string(index) + " is empty"), index_(index) {}
  std::size_t index() const { return index_; }

 private:
  std::size_t index_;
};

class UnpairedEnd : public Error {
 public:
  using Error::Error;
};

class UnknownTarget : public Error {
 public:
  using Error::Error;
};

/// Ill-nested or illegal trace event. position is the zero-based event index.
class TraceError : public Error {
 public:
  TraceError(std::size_t position, const std::string& what)
      : Error("trace event " + std::to_string(position) + ": " + what), position_(position) {}
  std::size_t position() const { return position_; }

 private:
  std::size_t position_;
};

/// The program carries no gadgets of the requested class, so a reduction
/// percentage is undefined.
class ZeroTotal : public Error {
 public:
  using Error::Error;
};

}  // namespace deckforge
