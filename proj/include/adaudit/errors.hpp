#pragma once

#include <stdexcept>
#include <string>

namespace adaudit {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Exact fair shares requested for an agent with a continuous law.
class ContinuousSupport : public Error {
 public:
  using Error::Error;
};

class ReportOutOfRange : public Error {
 public:
  using Error::Error;
};

class ReportFromEliminatedAgent : public Error {
 public:
  using Error::Error;
};

// An alive agent submitted no report.
class MissingReport : public Error {
 public:
  using Error::Error;
};

// A strategy marked up while the auxiliary game forbids it. This is a bug in
// the strategy, not a game event.
class RestrictedMarkUp : public Error {
 public:
  using Error::Error;
};

class DegenerateGrid : public Error {
 public:
  using Error::Error;
};

class ParseError : public Error {
 public:
  using Error::Error;
};

class ValidationError : public Error {
 public:
  using Error::Error;
};

}  // namespace adaudit
