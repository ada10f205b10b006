#pragma once

#include <stdexcept>
#include <string>

namespace tnt {

// Base for every failure raised by the library. Subclasses name the
// condition so callers can pick a policy (skip, abort, report).
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class InvalidArgument : public Error {
 public:
  using Error::Error;
};

// Every supported token of a distribution was in the negative set.
class TotalMassRemoved : public Error {
 public:
  using Error::Error;
};

class TargetNotPositive : public Error {
 public:
  using Error::Error;
};

class TokenOutOfRange : public Error {
 public:
  using Error::Error;
};

class NonFiniteLoss : public Error {
 public:
  using Error::Error;
};

class LengthMismatch : public Error {
 public:
  using Error::Error;
};

class EmptyDataset : public Error {
 public:
  using Error::Error;
};

class EmptyCorpus : public Error {
 public:
  using Error::Error;
};

class InvalidSpec : public Error {
 public:
  using Error::Error;
};

class InfeasibleConstraint : public Error {
 public:
  using Error::Error;
};

class SpaceTooLarge : public Error {
 public:
  using Error::Error;
};

class ZeroOriginalMass : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

// A pipeline run stopped before completion; its manifest allows resuming.
class Interrupted : public Error {
 public:
  using Error::Error;
};

}  // namespace tnt
