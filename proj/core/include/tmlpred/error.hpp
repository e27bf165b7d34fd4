// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <stdexcept>
#include <string>

namespace tmlpred
{

/// Base class for every error raised by the library.
class Error: public std::runtime_error
{
  public:
    using std::runtime_error::runtime_error;
};

/// Malformed input: unparseable files, schema violations, bad arguments.
class InputError: public Error
{
  public:
    using Error::Error;
};

/// A lookup referenced something that does not exist (conversation, paper, metric).
class NotFoundError: public Error
{
  public:
    using Error::Error;
};

/// The request conflicts with current state (e.g. a turn already in flight).
class ConflictError: public Error
{
  public:
    using Error::Error;
};

/// An internal invariant would be broken by the requested operation.
class InvariantError: public Error
{
  public:
    using Error::Error;
};

/// A backend reply could not be parsed into the expected structure.
class BackendError: public Error
{
  public:
    using Error::Error;
};

} // namespace tmlpred
