#pragma once

#include <stdexcept>
#include <string>

namespace sbo {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class InvalidArgument : public Error {
 public:
  using Error::Error;
};

/// Cholesky or other linear-algebra breakdown that jitter could not repair.
class NumericalError : public Error {
 public:
  using Error::Error;
};

/// The query ledger is at its budget; the query was not sent.
class BudgetExhausted : public Error {
 public:
  using Error::Error;
};

/// Connection refused, reset or timed out. Never consumes budget.
class TransportError : public Error {
 public:
  using Error::Error;
};

/// Peer sent a frame that violates the wire protocol. Never consumes budget.
class ProtocolError : public Error {
 public:
  using Error::Error;
};

/// The oracle does not support the requested feedback mode.
class CapabilityError : public Error {
 public:
  using Error::Error;
};

/// Malformed or out-of-range dataset / weight file.
class FormatError : public Error {
 public:
  using Error::Error;
};

}  // namespace sbo
